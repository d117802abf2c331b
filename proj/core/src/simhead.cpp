// Copyright 2026 The Empathic Retrieval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "empathic/simhead.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "empathic/error.hpp"
#include "empathic/metrics.hpp"
#include "empathic/rng.hpp"

namespace empathic::simhead {
namespace {

using Json = nlohmann::json;

Eigen::Map<const Eigen::VectorXd> AsEigen(const EmbeddingVector& v) {
  return {v.values().data(), static_cast<Eigen::Index>(v.dim())};
}

void CheckDims(const ProjectionHead& head, const EmbeddingVector& u) {
  if (u.dim() != head.dim()) {
    Fail(ErrorKind::kArgument, "simhead.dim_mismatch",
         "vector dimension " + std::to_string(u.dim()) + " does not match head dimension " +
             std::to_string(head.dim()));
  }
}

struct LossTerms {
  double loss;
  Eigen::MatrixXd gradient;
};

// Loss and gradient for one pair:
//   a = Hu, b = Hv, c = a.b / (|a||b|), L = (c - g)^2
//   dc/da = b / (|a||b|) - c a / |a|^2   (and symmetrically for b)
//   dL/dH = 2 (c - g) (dc/da u^T + dc/db v^T)
LossTerms LossAndGradient(const ProjectionHead& head, const EmbeddingVector& u,
                          const EmbeddingVector& v, double gold01, bool want_gradient) {
  CheckDims(head, u);
  CheckDims(head, v);
  const Eigen::VectorXd a = head.matrix * AsEigen(u);
  const Eigen::VectorXd b = head.matrix * AsEigen(v);
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    Fail(ErrorKind::kComputation, "simhead.zero_projection",
         "projected vector has zero norm");
  }
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  const double residual = c - gold01;
  LossTerms out{residual * residual, {}};
  if (want_gradient) {
    // 2 (c - g) folded into the vectors, then two rank-one updates
    const Eigen::VectorXd dl_da = (2.0 * residual) * (b / (na * nb) - (c / (na * na)) * a);
    const Eigen::VectorXd dl_db = (2.0 * residual) * (a / (na * nb) - (c / (nb * nb)) * b);
    out.gradient.noalias() = dl_da * AsEigen(u).transpose();
    out.gradient.noalias() += dl_db * AsEigen(v).transpose();
  }
  return out;
}

Json ConfigToJson(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"epochs", c.epochs},               {"warmup_fraction", c.warmup_fraction},
          {"seed", c.seed},                   {"clip_norm", c.clip_norm}};
}

TrainConfig ConfigFromJson(const Json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.seed = j.value("seed", c.seed);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  return c;
}

// JSON has no NaN; undefined Spearman values are written as null.
Json NullableArray(const std::vector<double>& values) {
  Json out = Json::array();
  for (double x : values) out.push_back(std::isfinite(x) ? Json(x) : Json(nullptr));
  return out;
}

std::vector<double> NullableVector(const Json& j) {
  std::vector<double> out;
  for (const Json& x : j) {
    out.push_back(x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>());
  }
  return out;
}

Json ReportToJson(const TrainReport& r) {
  return {{"train_loss", NullableArray(r.train_loss)},
          {"dev_spearman", NullableArray(r.dev_spearman)},
          {"initial_dev_spearman", NullableArray({r.initial_dev_spearman})[0]},
          {"best_epoch", r.best_epoch},
          {"steps", r.steps},
          {"seconds", r.seconds}};
}

TrainReport ReportFromJson(const Json& j) {
  TrainReport r;
  r.train_loss = NullableVector(j.at("train_loss"));
  r.dev_spearman = NullableVector(j.at("dev_spearman"));
  const Json& initial = j.at("initial_dev_spearman");
  r.initial_dev_spearman =
      initial.is_null() ? std::numeric_limits<double>::quiet_NaN() : initial.get<double>();
  r.best_epoch = j.at("best_epoch").get<std::size_t>();
  r.steps = j.at("steps").get<std::size_t>();
  r.seconds = j.at("seconds").get<double>();
  return r;
}

}  // namespace

ProjectionHead ProjectionHead::Identity(std::size_t dim, std::string backbone_name) {
  if (dim == 0) {
    Fail(ErrorKind::kArgument, "simhead.bad_dimension", "head dimension must be positive");
  }
  const auto d = static_cast<Eigen::Index>(dim);
  return ProjectionHead{std::move(backbone_name), Eigen::MatrixXd::Identity(d, d)};
}

ProjectionHead ProjectionHead::NoisyIdentity(std::size_t dim, std::string backbone_name,
                                             double sigma, std::uint64_t seed) {
  ProjectionHead head = Identity(dim, std::move(backbone_name));
  Rng rng(seed);
  // Row-major fill so the draw order does not depend on Eigen's storage.
  for (Eigen::Index i = 0; i < head.matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < head.matrix.cols(); ++j) {
      head.matrix(i, j) += sigma * rng.Normal();
    }
  }
  return head;
}

std::string ProjectionHead::Id() const {
  if (matrix.isIdentity(0.0)) return "identity-" + backbone_name;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  mix(backbone_name.data(), backbone_name.size());
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
      const double x = matrix(i, j);
      mix(&x, sizeof x);
    }
  }
  return "head-" + embedding::HashHex(h);
}

double NormalizeLabel(double likert) {
  if (!(likert >= 1.0 && likert <= 4.0)) {
    Fail(ErrorKind::kArgument, "simhead.label_out_of_range",
         "Likert label " + std::to_string(likert) + " outside [1, 4]");
  }
  return (likert - 1.0) / 3.0;
}

EmbeddingVector Project(const ProjectionHead& head, const EmbeddingVector& u) {
  CheckDims(head, u);
  const Eigen::VectorXd out = head.matrix * AsEigen(u);
  return EmbeddingVector(std::vector<double>(out.data(), out.data() + out.size()));
}

double PairLoss(const ProjectionHead& head, const EmbeddingVector& u,
                const EmbeddingVector& v, double gold01) {
  return LossAndGradient(head, u, v, gold01, false).loss;
}

Eigen::MatrixXd PairLossGradient(const ProjectionHead& head, const EmbeddingVector& u,
                                 const EmbeddingVector& v, double gold01) {
  return LossAndGradient(head, u, v, gold01, true).gradient;
}

double ScheduleMultiplier(std::size_t step, std::size_t warmup_steps, std::size_t total_steps) {
  if (step < warmup_steps) {
    return static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const double remaining = static_cast<double>(total_steps) - static_cast<double>(step);
  const double span = static_cast<double>(std::max<std::size_t>(1, total_steps - warmup_steps));
  return std::max(0.0, remaining / span);
}

double HeadSpearman(const ProjectionHead& head, const std::vector<TrainingPair>& pairs) {
  if (pairs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> predicted, gold;
  predicted.reserve(pairs.size());
  gold.reserve(pairs.size());
  for (const TrainingPair& p : pairs) {
    predicted.push_back(embedding::Cosine(Project(head, p.u), Project(head, p.v)));
    gold.push_back(p.gold01);
  }
  try {
    return metrics::Spearman(predicted, gold);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kComputation) throw;
    return std::numeric_limits<double>::quiet_NaN();
  }
}

std::pair<ProjectionHead, TrainReport> Train(const ProjectionHead& head_init,
                                             const std::vector<TrainingPair>& train,
                                             const std::vector<TrainingPair>& dev,
                                             const TrainConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  if (train.empty()) {
    Fail(ErrorKind::kArgument, "simhead.empty_train", "training set is empty");
  }
  if (config.batch_size == 0 || !(config.learning_rate > 0.0) ||
      !(config.warmup_fraction >= 0.0 && config.warmup_fraction < 1.0)) {
    Fail(ErrorKind::kArgument, "simhead.bad_config",
         "need batch_size > 0, learning_rate > 0 and warmup_fraction in [0, 1)");
  }

  TrainReport report;
  report.initial_dev_spearman = HeadSpearman(head_init, dev);
  ProjectionHead head = head_init;
  ProjectionHead best = head_init;
  double best_spearman = -std::numeric_limits<double>::infinity();

  const std::size_t steps_per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  const auto warmup_steps = static_cast<std::size_t>(
      std::floor(config.warmup_fraction * static_cast<double>(total_steps)));

  Rng rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.Shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      Eigen::MatrixXd gradient = Eigen::MatrixXd::Zero(head.matrix.rows(), head.matrix.cols());
      double batch_loss = 0.0;
      try {
        for (std::size_t k = begin; k < end; ++k) {
          const TrainingPair& p = train[order[k]];
          LossTerms terms = LossAndGradient(head, p.u, p.v, p.gold01, true);
          batch_loss += terms.loss;
          gradient += terms.gradient;
        }
      } catch (const Error& e) {
        Fail(ErrorKind::kTraining, "training.failed_step",
             "step " + std::to_string(step) + ": " + e.what());
      }
      const double count = static_cast<double>(end - begin);
      gradient /= count;
      if (!std::isfinite(batch_loss) || !gradient.allFinite()) {
        Fail(ErrorKind::kTraining, "training.non_finite",
             "non-finite loss at step " + std::to_string(step));
      }
      epoch_loss += batch_loss;
      const double grad_norm = gradient.norm();
      if (config.clip_norm > 0.0 && grad_norm > config.clip_norm) {
        gradient *= config.clip_norm / grad_norm;
      }
      const double lr =
          config.learning_rate * ScheduleMultiplier(step, warmup_steps, total_steps);
      head.matrix -= lr * gradient;
    }
    report.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));
    const double rho = HeadSpearman(head, dev);
    report.dev_spearman.push_back(rho);
    // Strict improvement keeps the earliest best epoch.
    if (dev.empty() || (std::isfinite(rho) && rho > best_spearman) ||
        (report.best_epoch == 0 && epoch == config.epochs)) {
      if (std::isfinite(rho)) best_spearman = rho;
      best = head;
      report.best_epoch = epoch;
    }
  }
  report.steps = step;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(best), std::move(report)};
}

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const ProjectionHead& head = checkpoint.head;
  std::vector<double> row_major;
  row_major.reserve(head.dim() * head.dim());
  for (Eigen::Index i = 0; i < head.matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < head.matrix.cols(); ++j) row_major.push_back(head.matrix(i, j));
  }
  Json j = {{"backbone_name", head.backbone_name},
            {"dim", head.dim()},
            {"matrix", row_major},
            {"config", ConfigToJson(checkpoint.config)},
            {"report", checkpoint.report ? ReportToJson(*checkpoint.report) : Json(nullptr)}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) Fail(ErrorKind::kIo, "io.unwritable", "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, "io.unreadable", "cannot open " + path.string());
  Json j;
  try {
    j = Json::parse(in);
    const std::size_t dim = j.at("dim").get<std::size_t>();
    const std::vector<double> values = j.at("matrix").get<std::vector<double>>();
    if (dim == 0 || values.size() != dim * dim) {
      Fail(ErrorKind::kParse, "parse.bad_checkpoint", "matrix size does not match dim");
    }
    Checkpoint c;
    c.head = ProjectionHead::Identity(dim, j.at("backbone_name").get<std::string>());
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t k = 0; k < dim; ++k) {
        const double x = values[i * dim + k];
        if (!std::isfinite(x)) {
          Fail(ErrorKind::kParse, "parse.bad_checkpoint", "non-finite matrix entry");
        }
        c.head.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = x;
      }
    }
    if (j.contains("config")) c.config = ConfigFromJson(j["config"]);
    if (j.contains("report") && !j["report"].is_null()) c.report = ReportFromJson(j["report"]);
    return c;
  } catch (const Json::exception& e) {
    Fail(ErrorKind::kParse, "parse.bad_checkpoint", path.string() + ": " + e.what());
  }
}

}  // namespace empathic::simhead
