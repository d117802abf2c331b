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

#include "empathic/cli.hpp"

#include <atomic>
#include <csignal>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "empathic/agreement.hpp"
#include "empathic/backend_factory.hpp"
#include "empathic/corpus.hpp"
#include "empathic/embedding.hpp"
#include "empathic/error.hpp"
#include "empathic/jsonl.hpp"
#include "empathic/metrics.hpp"
#include "empathic/reasoner.hpp"
#include "empathic/retrieval.hpp"
#include "empathic/rng.hpp"
#include "empathic/sampler.hpp"
#include "empathic/simhead.hpp"
#include "empathic/study.hpp"
#include "empathic/study_http.hpp"
#include "empathic/text_metrics.hpp"
#include "empathic/version.hpp"

namespace empathic::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;
using corpus::Corpus;
using corpus::Split;
using corpus::Story;

void RequireFile(const std::string& path, const std::string& what) {
  if (path.empty()) {
    Fail(ErrorKind::kConfig, "config.path_missing", what + " path is not set");
  }
  if (!fs::exists(path)) {
    Fail(ErrorKind::kConfig, "config.path_missing", what + " not found: " + path);
  }
}

void PrepareOutput(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void WriteJson(const std::string& path, const Json& j) {
  PrepareOutput(path);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    out << j.dump(2) << "\n";
    if (!out) Fail(ErrorKind::kIo, "io.unwritable", "cannot write " + path);
  }
  fs::rename(tmp, path);
}

Json Finite(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

std::string Fixed(double x, int digits = 4) {
  if (!std::isfinite(x)) return "n/a";
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << x;
  return s.str();
}

struct BackendOptions {
  std::string kind = "stub";
  std::size_t dim = 64;
  std::uint64_t seed = 0;
  std::string vectors;
  std::string url = "http://127.0.0.1:8081";
  std::size_t max_batch = 32;
  int timeout_ms = 30000;
  std::string cache;

  void Add(CLI::App* cmd) {
    cmd->add_option("--backend", kind, "Embedding backend")
        ->check(CLI::IsMember({"stub", "file", "http"}));
    cmd->add_option("--dim", dim, "Stub backend dimension");
    cmd->add_option("--backend-seed", seed, "Stub backend seed");
    cmd->add_option("--vectors", vectors, "Vector file for the file backend");
    cmd->add_option("--embed-url", url, "Base URL of the HTTP embedding service");
    cmd->add_option("--max-batch", max_batch, "Texts per HTTP embedding request");
    cmd->add_option("--timeout-ms", timeout_ms, "HTTP embedding request timeout");
    cmd->add_option("--embed-cache", cache, "Embedding cache file");
  }

  void Validate() const {
    if (kind == "file") RequireFile(vectors, "vector file");
  }

  embedding::BackendHandle Make() const {
    embedding::BackendSpec spec;
    spec.kind = kind;
    spec.dim = dim;
    spec.seed = seed;
    spec.vectors = vectors;
    spec.http.base_url = url;
    spec.http.max_batch = max_batch;
    spec.http.timeout = std::chrono::milliseconds(timeout_ms);
    if (!cache.empty()) spec.cache = cache;
    return embedding::MakeBackend(spec);
  }
};

struct CorpusOptions {
  std::string stories;
  std::string pairs;

  void Add(CLI::App* cmd, bool with_pairs) {
    cmd->add_option("--stories", stories, "Story records (JSONL)");
    if (with_pairs) cmd->add_option("--pairs", pairs, "Pair annotation records (JSONL)");
  }

  void Validate(bool need_pairs) const {
    RequireFile(stories, "stories");
    if (need_pairs || !pairs.empty()) RequireFile(pairs, "pairs");
  }

  Corpus Load() const {
    return corpus::LoadCorpus(stories, pairs.empty() ? std::nullopt
                                                     : std::optional<fs::path>(pairs));
  }
};

std::optional<Split> ParseSplitFilter(const std::string& name) {
  if (name == "all") return std::nullopt;
  return corpus::ParseSplit(name);
}

std::vector<Story> StoriesIn(const Corpus& c, std::optional<Split> split) {
  std::vector<Story> out;
  for (const Story& s : c.stories()) {
    if (!split || s.split == *split) out.push_back(s);
  }
  return out;
}

// Pairs whose stories both sit in the split.
std::vector<const corpus::PairAnnotation*> PairsIn(const Corpus& c, std::optional<Split> split) {
  std::vector<const corpus::PairAnnotation*> out;
  for (const auto& p : c.pairs()) {
    if (!split || (c.Get(p.pair.story_a).split == *split &&
                   c.Get(p.pair.story_b).split == *split)) {
      out.push_back(&p);
    }
  }
  return out;
}

std::map<std::string, embedding::EmbeddingVector> EmbedStories(
    embedding::EmbeddingBackend& backend, const std::vector<Story>& stories) {
  std::vector<std::string> texts;
  texts.reserve(stories.size());
  for (const Story& s : stories) texts.push_back(s.text);
  auto vectors = backend.EmbedBatch(texts);
  std::map<std::string, embedding::EmbeddingVector> out;
  for (std::size_t i = 0; i < stories.size(); ++i) out.emplace(stories[i].id, std::move(vectors[i]));
  return out;
}

std::vector<simhead::TrainingPair> TrainingPairs(
    const std::vector<const corpus::PairAnnotation*>& pairs,
    const std::map<std::string, embedding::EmbeddingVector>& vectors) {
  std::vector<simhead::TrainingPair> out;
  for (const auto* p : pairs) {
    out.push_back({vectors.at(p->pair.story_a), vectors.at(p->pair.story_b),
                   simhead::NormalizeLabel(p->Gold(corpus::Axis::kEmpathy))});
  }
  return out;
}

simhead::ProjectionHead HeadFor(const std::string& checkpoint,
                                embedding::EmbeddingBackend& backend) {
  if (checkpoint.empty()) {
    return simhead::ProjectionHead::Identity(backend.dimension(), backend.name());
  }
  simhead::ProjectionHead head = simhead::LoadCheckpoint(checkpoint).head;
  if (head.backbone_name != backend.name() || head.dim() != backend.dimension()) {
    Fail(ErrorKind::kConfig, "config.backbone_mismatch",
         "checkpoint was trained on '" + head.backbone_name + "' (d=" +
             std::to_string(head.dim()) + "), backend is '" + backend.name() + "' (d=" +
             std::to_string(backend.dimension()) + ")");
  }
  return head;
}

// Queries with at least two rated partners in the pair list.
std::vector<metrics::RankingInstance> RankingInstances(
    const std::vector<metrics::Prediction>& predictions) {
  std::map<std::string, metrics::RankingInstance> by_query;
  auto add = [&](const std::string& q, const std::string& c, const metrics::Prediction& p) {
    auto& inst = by_query[q];
    inst.query_id = q;
    inst.candidates.push_back(c);
    inst.human_scores.push_back(p.gold);
    inst.model_scores.push_back(p.predicted);
  };
  for (const auto& p : predictions) {
    add(p.story_a, p.story_b, p);
    add(p.story_b, p.story_a, p);
  }
  std::vector<metrics::RankingInstance> out;
  for (auto& [q, inst] : by_query) {
    if (inst.candidates.size() >= 2) out.push_back(std::move(inst));
  }
  return out;
}

Json ClassificationJson(const metrics::ClassificationScores& c) {
  return {{"accuracy", c.accuracy},
          {"precision", c.precision},
          {"recall", c.recall},
          {"f1", c.f1},
          {"precision_undefined", c.precision_undefined},
          {"recall_undefined", c.recall_undefined}};
}

class Context {
 public:
  Context(CLI::App& app, std::ostream& out) : app_(app), out_(out) {}

  // Reproducibility header: version, subcommand, seed and a hash of the
  // effective options.
  void Header(const CLI::App* cmd, std::uint64_t seed) const {
    const std::string effective = cmd->config_to_str(true, false);
    out_ << "# empathic " << kVersion << " " << cmd->get_name() << " seed=" << seed
         << " config=" << embedding::HashHex(embedding::TextHash(effective))
         << " eigen=" << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "."
         << EIGEN_MINOR_VERSION << " json=" << NLOHMANN_JSON_VERSION_MAJOR << "."
         << NLOHMANN_JSON_VERSION_MINOR << "." << NLOHMANN_JSON_VERSION_PATCH << "\n";
  }

  std::ostream& out() const { return out_; }

 private:
  CLI::App& app_;
  std::ostream& out_;
};

// ingest

struct IngestCommand {
  CorpusOptions corpus;
  std::string out_stories;
  std::string out_pairs;
  bool assign = false;
  std::vector<double> ratios{0.75, 0.05, 0.20};
  std::uint64_t seed = 0;

  void Add(CLI::App* cmd) {
    corpus.Add(cmd, true);
    cmd->add_option("--out-stories", out_stories, "Write validated stories here");
    cmd->add_option("--out-pairs", out_pairs, "Write canonical pairs here");
    cmd->add_flag("--assign-splits", assign, "Assign train/dev/test splits");
    cmd->add_option("--ratios", ratios, "Train, dev, test ratios")->expected(3);
    cmd->add_option("--seed", seed, "Split seed");
  }

  void Run(const Context& ctx, const CLI::App* cmd) {
    corpus.Validate(false);
    ctx.Header(cmd, seed);
    Corpus c = corpus.Load();
    if (assign) {
      const corpus::SplitRatios r{ratios[0], ratios[1], ratios[2]};
      const auto split = corpus::AssignSplits(c.stories(), r, seed, c.pairs());
      c = Corpus(corpus::ApplySplit(c.stories(), split), c.pairs());
    }
    std::map<std::string, std::size_t> stories_per, pairs_per;
    for (const Story& s : c.stories()) ++stories_per[std::string(corpus::ToString(s.split))];
    for (const auto& p : c.pairs()) {
      const Split a = c.Get(p.pair.story_a).split;
      const Split b = c.Get(p.pair.story_b).split;
      ++pairs_per[a == b ? std::string(corpus::ToString(a)) : "cross"];
    }
    auto& out = ctx.out();
    out << "stories " << c.stories().size() << "\n";
    out << "pairs " << c.pairs().size() << "\n";
    for (const char* name : {"train", "dev", "test", "unsplit", "cross"}) {
      if (stories_per.count(name) || pairs_per.count(name)) {
        out << "split " << name << " stories=" << stories_per[name]
            << " pairs=" << pairs_per[name] << "\n";
      }
    }
    if (!out_stories.empty()) {
      PrepareOutput(out_stories);
      corpus::WriteStories(out_stories, c.stories());
    }
    if (!out_pairs.empty()) {
      PrepareOutput(out_pairs);
      corpus::WritePairs(out_pairs, c.pairs());
    }
  }
};

// embed

struct EmbedCommand {
  CorpusOptions corpus;
  BackendOptions backend;
  std::string out_path;
  bool features = false;

  void Add(CLI::App* cmd) {
    corpus.Add(cmd, false);
    backend.Add(cmd);
    cmd->add_option("--out", out_path, "Vector file to write")->required();
    cmd->add_flag("--features", features, "Also embed event, emotion and moral summaries");
  }

  void Run(const Context& ctx, const CLI::App* cmd) {
    corpus.Validate(false);
    backend.Validate();
    ctx.Header(cmd, backend.seed);
    const Corpus c = corpus.Load();
    auto handle = backend.Make();
    std::set<std::string> unique;
    for (const Story& s : c.stories()) {
      unique.insert(s.text);
      if (features) {
        for (const std::string* f : {&s.event, &s.emotion, &s.moral}) {
          if (!f->empty()) unique.insert(*f);
        }
      }
    }
    const std::vector<std::string> texts(unique.begin(), unique.end());
    const auto vectors = handle.backend->EmbedBatch(texts);
    std::map<std::uint64_t, embedding::EmbeddingVector> by_hash;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      by_hash.emplace(embedding::TextHash(texts[i]), vectors[i]);
    }
    PrepareOutput(out_path);
    embedding::WriteVectorFile(out_path, by_hash);
    handle.SaveCache();
    ctx.out() << "backend " << handle.backend->name() << " dim " << handle.backend->dimension()
              << "\n";
    ctx.out() << "vectors " << by_hash.size() << "\n";
  }
};

// sample-pairs

struct SampleCommand {
  CorpusOptions corpus;
  BackendOptions backend;
  std::string split = "train";
  std::size_t n = 100;
  std::optional<std::size_t> cap;
  std::uint64_t seed = 0;
  std::string out_path;
  std::string report_path;

  void Add(CLI::App* cmd) {
    corpus.Add(cmd, false);
    backend.Add(cmd);
    cmd->add_option("--split", split, "Story split to draw from")
        ->check(CLI::IsMember({"train", "dev", "test", "unsplit", "all"}));
    cmd->add_option("-n,--count", n, "Pairs to sample");
    cmd->add_option("--cap", cap, "Score at most this many candidate pairs");
    cmd->add_option("--seed", seed, "Sampling seed");
    cmd->add_option("--out", out_path, "Sampled pairs as unrated pair records (JSONL)")->required();
    cmd->add_option("--report", report_path, "Bin report (JSON); default <out>.report.json");
  }

  void Run(const Context& ctx, const CLI::App* cmd) {
    corpus.Validate(false);
    backend.Validate();
    ctx.Header(cmd, seed);
    const Corpus c = corpus.Load();
    auto handle = backend.Make();
    std::vector<std::string> ids;
    for (const Story& s : StoriesIn(c, ParseSplitFilter(split))) ids.push_back(s.id);
    const auto candidates = sampler::CandidatePairs(ids, cap, seed);
    const auto scored = sampler::ScorePairs(*handle.backend, c, candidates);
    std::map<corpus::StoryPair, double> score_of;
    for (const auto& s : scored) score_of[s.pair] = s.score;
    const auto binned = sampler::BinPairs(scored);
    const auto draws = sampler::SampleWithBins(binned, n, seed);
    std::vector<Json> records;
    std::vector<std::size_t> per_bin(binned.bins.size(), 0);
    for (const auto& d : draws) {
      ++per_bin[d.bin];
      // loads as a pair file once annotators fill in ratings
      records.push_back({{"story_a", d.pair.story_a},
                         {"story_b", d.pair.story_b},
                         {"ratings", Json::array()},
                         {"composite", score_of.at(d.pair)},
                         {"bin", d.bin}});
    }
    PrepareOutput(out_path);
    jsonl::WriteAll(out_path, records);
    const std::string report = report_path.empty() ? out_path + ".report.json" : report_path;
    PrepareOutput(report);
    WriteJson(report, {{"candidates", candidates.size()},
                       {"scored", scored.size()},
                       {"bins", binned.bins.size()},
                       {"reduced", binned.reduced},
                       {"weights", binned.weights},
                       {"draws_per_bin", per_bin},
                       {"seed", seed}});
    handle.SaveCache();
    auto& out = ctx.out();
    out << "candidates " << candidates.size() << " bins " << binned.bins.size()
        << (binned.reduced ? " (reduced)" : "") << "\n";
    out << "sampled " << draws.size() << "\n";
    out << "bin  draws  weight\n";
    for (std::size_t b = 0; b < std::min<std::size_t>(10, per_bin.size()); ++b) {
      out << std::setw(3) << b << "  " << std::setw(5) << per_bin[b] << "  "
          << Fixed(binned.weights[b]) << "\n";
    }
  }
};

// train

struct TrainCommand {
  CorpusOptions corpus;
  BackendOptions backend;
  simhead::TrainConfig config;
  std::string init = "noisy";
  double init_sigma = 1e-3;
  std::string out_path;
  std::string report_path;

  void Add(CLI::App* cmd) {
    corpus.Add(cmd, true);
    backend.Add(cmd);
    cmd->add_option("--lr", config.learning_rate, "Base learning rate");
    cmd->add_option("--batch-size", config.batch_size, "Pairs per step");
    cmd->add_option("--epochs", config.epochs, "Training epochs");
    cmd->add_option("--warmup", config.warmup_fraction, "Warmup fraction of total steps");
    cmd->add_option("--clip-norm", config.clip_norm, "Gradient norm clip; <= 0 disables");
    cmd->add_option("--seed", config.seed, "Shuffle and init seed");
    cmd->add_option("--init", init, "Head initialization")
        ->check(CLI::IsMember({"identity", "noisy"}));
    cmd->add_option("--init-sigma", init_sigma, "Noise scale for --init noisy");
    cmd->add_option("--out", out_path, "Checkpoint to write")->required();
    cmd->add_option("--report", report_path, "Training report (JSON)");
  }

  void Run(const Context& ctx, const CLI::App* cmd) {
    corpus.Validate(true);
    backend.Validate();
    ctx.Header(cmd, config.seed);
    const Corpus c = corpus.Load();
    auto handle = backend.Make();
    auto& be = *handle.backend;
    const auto train_pairs = PairsIn(c, Split::kTrain);
    const auto dev_pairs = PairsIn(c, Split::kDev);
    if (train_pairs.empty()) {
      Fail(ErrorKind::kTraining, "train.no_pairs", "no pairs with both stories in the train split");
    }
    std::vector<Story> needed;
    for (const Story& s : c.stories()) {
      if (s.split == Split::kTrain || s.split == Split::kDev) needed.push_back(s);
    }
    const auto vectors = EmbedStories(be, needed);
    const auto train = TrainingPairs(train_pairs, vectors);
    const auto dev = TrainingPairs(dev_pairs, vectors);
    const auto head0 =
        init == "identity"
            ? simhead::ProjectionHead::Identity(be.dimension(), be.name())
            : simhead::ProjectionHead::NoisyIdentity(be.dimension(), be.name(), init_sigma,
                                                     config.seed);
    auto [head, report] = simhead::Train(head0, train, dev, config);
    PrepareOutput(out_path);
    simhead::SaveCheckpoint(out_path, {head, config, report});
    handle.SaveCache();

    auto& out = ctx.out();
    out << "train_pairs " << train.size() << " dev_pairs " << dev.size() << " dim "
        << be.dimension() << "\n";
    out << "initial_dev_spearman " << Fixed(report.initial_dev_spearman) << "\n";
    out << "epoch  train_loss  dev_spearman\n";
    for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
      out << std::setw(5) << e + 1 << "  " << std::setw(10) << Fixed(report.train_loss[e], 6)
          << "  " << std::setw(12) << Fixed(report.dev_spearman[e]) << "\n";
    }
    out << "best_epoch " << report.best_epoch << "\n";
    if (report.best_epoch > 0) {
      out << "best_dev_spearman " << Fixed(report.dev_spearman[report.best_epoch - 1]) << "\n";
    }
    out << "head " << head.Id() << "\n";
    if (!report_path.empty()) {
      Json losses = Json::array(), spearman = Json::array();
      for (double x : report.train_loss) losses.push_back(x);
      for (double x : report.dev_spearman) spearman.push_back(Finite(x));
      WriteJson(report_path, {{"head_id", head.Id()},
                              {"train_loss", losses},
                              {"dev_spearman", spearman},
                              {"initial_dev_spearman", Finite(report.initial_dev_spearman)},
                              {"best_epoch", report.best_epoch},
                              {"steps", report.steps},
                              {"seconds", report.seconds}});
    }
  }
};

// evaluate

struct EvaluateCommand {
  CorpusOptions corpus;
  BackendOptions backend;
  std::string checkpoint;
  std::string predictions_path;
  std::string split = "test";
  std::string out_path;
  std::string write_predictions;

  void Add(CLI::App* cmd) {
    corpus.Add(cmd, true);
    backend.Add(cmd);
    cmd->add_option("--checkpoint", checkpoint, "Trained head; identity head when omitted");
    cmd->add_option("--predictions", predictions_path,
                    "Score a prediction file {story_a, story_b, gold, predicted} instead");
    cmd->add_option("--split", split, "Pairs to evaluate")
        ->check(CLI::IsMember({"train", "dev", "test", "all"}));
    cmd->add_option("--out", out_path, "Evaluation record (JSON)");
    cmd->add_option("--write-predictions", write_predictions, "Write model predictions (JSONL)");
  }

  std::vector<metrics::Prediction> Predict(const Corpus& c, embedding::EmbeddingBackend& be,
                                           const simhead::ProjectionHead& head,
                                           std::optional<Split> which) const {
    const auto pairs = PairsIn(c, which);
    std::set<std::string> ids;
    for (const auto* p : pairs) {
      ids.insert(p->pair.story_a);
      ids.insert(p->pair.story_b);
    }
    std::vector<Story> stories;
    for (const auto& id : ids) stories.push_back(c.Get(id));
    const auto vectors = EmbedStories(be, stories);
    std::map<std::string, embedding::EmbeddingVector> projected;
    for (const auto& [id, v] : vectors) projected.emplace(id, simhead::Project(head, v));
    std::vector<metrics::Prediction> out;
    for (const auto* p : pairs) {
      out.push_back({p->pair.story_a, p->pair.story_b, p->Gold(corpus::Axis::kEmpathy),
                     embedding::Cosine(projected.at(p->pair.story_a),
                                       projected.at(p->pair.story_b))});
    }
    return out;
  }

  void Run(const Context& ctx, const CLI::App* cmd) {
    if (predictions_path.empty()) {
      corpus.Validate(true);
      backend.Validate();
      if (!checkpoint.empty()) RequireFile(checkpoint, "checkpoint");
    } else {
      RequireFile(predictions_path, "predictions");
    }
    ctx.Header(cmd, 0);

    std::vector<metrics::Prediction> predictions;
    Json record = {{"split", split}};
    std::optional<simhead::Checkpoint> ck;
    if (!predictions_path.empty()) {
      jsonl::ForEachRecord(predictions_path, [&](const Json& r, std::size_t line) {
        // reason --kind pair_score output: 1-4 scores, mapped onto the cosine scale
        if (!r.contains("predicted") && r.contains("llm")) {
          predictions.push_back(
              {jsonl::RequireString(r, "story_a", line), jsonl::RequireString(r, "story_b", line),
               jsonl::RequireField(r, "human", line).get<double>(),
               simhead::NormalizeLabel(jsonl::RequireField(r, "llm", line).get<double>())});
          return;
        }
        predictions.push_back({jsonl::RequireString(r, "story_a", line),
                               jsonl::RequireString(r, "story_b", line),
                               jsonl::RequireField(r, "gold", line).get<double>(),
                               jsonl::RequireField(r, "predicted", line).get<double>()});
      });
      record["source"] = predictions_path;
    } else {
      const Corpus c = corpus.Load();
      auto handle = backend.Make();
      if (!checkpoint.empty()) ck = simhead::LoadCheckpoint(checkpoint);
      const auto head = HeadFor(checkpoint, *handle.backend);
      predictions = Predict(c, *handle.backend, head, ParseSplitFilter(split));
      record["head_id"] = head.Id();
      record["backend"] = handle.backend->name();
      // Dev Spearman under the same head, for comparison with training.
      const auto dev = Predict(c, *handle.backend, head, Split::kDev);
      if (dev.size() >= 2) {
        std::vector<double> g, p;
        for (const auto& d : dev) {
          g.push_back(d.gold);
          p.push_back(d.predicted);
        }
        try {
          record["dev_spearman"] = metrics::Spearman(p, g);
        } catch (const Error&) {
          record["dev_spearman"] = nullptr;
        }
      }
      if (ck && ck->report && ck->report->best_epoch > 0) {
        record["report_best_epoch"] = ck->report->best_epoch;
        record["report_best_dev_spearman"] =
            Finite(ck->report->dev_spearman[ck->report->best_epoch - 1]);
      }
      handle.SaveCache();
    }
    if (!write_predictions.empty()) {
      std::vector<Json> rows;
      for (const auto& p : predictions) {
        rows.push_back({{"story_a", p.story_a},
                        {"story_b", p.story_b},
                        {"gold", p.gold},
                        {"predicted", p.predicted}});
      }
      PrepareOutput(write_predictions);
      jsonl::WriteAll(write_predictions, rows);
    }

    const auto instances = RankingInstances(predictions);
    metrics::SimilarityEval eval;
    try {
      eval = metrics::EvaluateSimilarity(predictions, instances);
    } catch (const Error& e) {
      if (instances.empty() || e.kind() != ErrorKind::kComputation ||
          e.error_class().rfind("metrics.", 0) != 0) {
        throw;
      }
      eval = metrics::EvaluateSimilarity(predictions);
    }
    record["pairs"] = eval.pairs;
    record["pearson_r"] = eval.pearson_r;
    record["spearman_rho"] = eval.spearman_rho;
    record["classification"] = ClassificationJson(eval.classification);
    record["precision_at_1"] = eval.p_at_1 ? Json(*eval.p_at_1) : Json(nullptr);
    if (eval.ranking) {
      record["ranking"] = {{"kendall", eval.ranking->kendall},
                           {"spearman", eval.ranking->spearman},
                           {"used", eval.ranking->used},
                           {"skipped", eval.ranking->skipped}};
    }

    auto& out = ctx.out();
    out << "pairs        " << eval.pairs << "\n";
    out << "pearson_r    " << Fixed(eval.pearson_r * 100, 2) << "\n";
    out << "spearman_rho " << Fixed(eval.spearman_rho * 100, 2) << "\n";
    out << "accuracy     " << Fixed(eval.classification.accuracy * 100, 2) << "\n";
    out << "precision    " << Fixed(eval.classification.precision * 100, 2) << "\n";
    out << "recall       " << Fixed(eval.classification.recall * 100, 2) << "\n";
    out << "f1           " << Fixed(eval.classification.f1 * 100, 2) << "\n";
    if (eval.p_at_1) out << "p_at_1       " << Fixed(*eval.p_at_1 * 100, 2) << "\n";
    if (eval.ranking) {
      out << "kendall_rank " << Fixed(eval.ranking->kendall * 100, 2) << "\n";
      out << "spearman_rank " << Fixed(eval.ranking->spearman * 100, 2) << "\n";
    }
    if (record.contains("dev_spearman") && record["dev_spearman"].is_number()) {
      out << "dev_spearman " << Fixed(record["dev_spearman"].get<double>()) << "\n";
    }
    if (record.contains("report_best_dev_spearman") &&
        record["report_best_dev_spearman"].is_number()) {
      out << "report_best_dev_spearman "
          << Fixed(record["report_best_dev_spearman"].get<double>()) << " (epoch "
          << record["report_best_epoch"].get<std::size_t>() << ")\n";
    }
    if (!out_path.empty()) WriteJson(out_path, record);
  }
};

// index

struct IndexCommand {
  CorpusOptions corpus;
  BackendOptions backend;
  std::string checkpoint;
  std::string split = "all";
  std::string out_path;

  void Add(CLI::App* cmd) {
    corpus.Add(cmd, false);
    backend.Add(cmd);
    cmd->add_option("--checkpoint", checkpoint, "Trained head; identity head when omitted");
    cmd->add_option("--split", split, "Stories to index")
        ->check(CLI::IsMember({"train", "dev", "test", "unsplit", "all"}));
    cmd->add_option("--out", out_path, "Index file to write")->required();
  }

  void Run(const Context& ctx, const CLI::App* cmd) {
    corpus.Validate(false);
    backend.Validate();
    if (!checkpoint.empty()) RequireFile(checkpoint, "checkpoint");
    ctx.Header(cmd, 0);
    const Corpus c = corpus.Load();
    auto handle = backend.Make();
    const auto head = HeadFor(checkpoint, *handle.backend);
    const auto built = retrieval::BuildIndex(StoriesIn(c, ParseSplitFilter(split)),
                                             *handle.backend, head);
    PrepareOutput(out_path);
    built.index.Save(out_path);
    handle.SaveCache();
    ctx.out() << "indexed " << built.index.size() << " head " << built.index.head_id() << "\n";
    for (const auto& id : built.skipped) ctx.out() << "skipped " << id << "\n";
  }
};

// query

struct QueryCommand {
  BackendOptions backend;
  std::string index_path;
  std::string checkpoint;
  std::string text;
  std::string text_file;
  std::size_t k = 5;
  std::vector<std::string> exclude;
  std::string stories;

  void Add(CLI::App* cmd) {
    backend.Add(cmd);
    cmd->add_option("--index", index_path, "Index file")->required();
    cmd->add_option("--checkpoint", checkpoint, "Head used to build the index; identity when omitted");
    auto* t = cmd->add_option("--text", text, "Query text");
    auto* f = cmd->add_option("--text-file", text_file, "Read the query text from a file");
    t->excludes(f);
    cmd->add_option("-k", k, "Results to return");
    cmd->add_option("--exclude", exclude, "Story ids to leave out");
    cmd->add_option("--stories", stories, "Print story text from this corpus");
  }

  void Run(const Context& ctx, const CLI::App* cmd) {
    RequireFile(index_path, "index");
    backend.Validate();
    if (!checkpoint.empty()) RequireFile(checkpoint, "checkpoint");
    if (!text_file.empty()) RequireFile(text_file, "query text file");
    if (!stories.empty()) RequireFile(stories, "stories");
    if (text.empty() && text_file.empty()) {
      Fail(ErrorKind::kArgument, "query.no_text", "give --text or --text-file");
    }
    ctx.Header(cmd, 0);
    if (!text_file.empty()) {
      std::ifstream in(text_file);
      text.assign(std::istreambuf_iterator<char>(in), {});
    }
    const auto index = retrieval::StoryIndex::Load(index_path);
    auto handle = backend.Make();
    const auto head = HeadFor(checkpoint, *handle.backend);
    const std::set<std::string> ex(exclude.begin(), exclude.end());
    const auto result = retrieval::Query(index, text, *handle.backend, head, k, ex);
    std::optional<Corpus> c;
    if (!stories.empty()) c = corpus::LoadCorpus(stories);
    auto& out = ctx.out();
    out << "head " << result.head_id << " candidates " << result.candidates << "\n";
    for (std::size_t i = 0; i < result.hits.size(); ++i) {
      const auto& h = result.hits[i];
      out << i + 1 << "\t" << h.id << "\t" << Fixed(h.similarity, 6);
      if (c) {
        if (const Story* s = c->Find(h.id)) out << "\t" << s->text.substr(0, 80);
      }
      out << "\n";
    }
    handle.SaveCache();
  }
};

// serve

std::atomic<study::StudyServer*> g_server{nullptr};

extern "C" void StopServer(int) {
  if (auto* s = g_server.load()) s->Stop();
}

struct ServeCommand {
  std::string service_config;
  std::optional<int> port;
  std::optional<std::string> host;
  std::optional<std::string> store;

  void Add(CLI::App* cmd) {
    cmd->add_option("--service-config", service_config, "Service configuration (JSON)")->required();
    cmd->add_option("--port", port, "Override the configured port");
    cmd->add_option("--host", host, "Override the configured bind address");
    cmd->add_option("--store", store, "Override the session store path");
  }

  void Run(const Context& ctx, const CLI::App* cmd) {
    RequireFile(service_config, "service config");
    auto config = study::LoadServiceConfig(service_config);
    if (port) config.server.port = *port;
    if (host) config.server.host = *host;
    if (store) config.store_path = *store;
    ctx.Header(cmd, config.study.seed.value_or(0));
    auto session_store = std::make_shared<study::SessionStore>(config.store_path);
    auto service = std::make_shared<study::StudyService>(config.study, session_store);
    if (config.models) {
      service->SetModels(study::LoadModels(*config.models));
    } else {
      ctx.out() << "warning: no models configured; session creation will return 503\n";
    }
    study::StudyServer server(service, config.server);
    const int bound = server.Bind();
    ctx.out() << "listening on " << config.server.host << ":" << bound << std::endl;
    g_server = &server;
    std::signal(SIGINT, StopServer);
    std::signal(SIGTERM, StopServer);
    server.Run();
    g_server = nullptr;
    ctx.out() << "stopped\n";
  }
};

// agreement

struct AgreementCommand {
  CorpusOptions corpus;
  std::string level = "ordinal";
  std::string out_path;

  void Add(CLI::App* cmd) {
    corpus.Add(cmd, true);
    cmd->add_option("--level", level, "Measurement level for alpha")
        ->check(CLI::IsMember({"nominal", "ordinal", "interval"}));
    cmd->add_option("--out", out_path, "Agreement table (JSON)");
  }

  void Run(const Context& ctx, const CLI::App* cmd) {
    corpus.Validate(true);
    ctx.Header(cmd, 0);
    const Corpus c = corpus.Load();
    const auto lvl = level == "nominal"   ? corpus::MeasurementLevel::kNominal
                     : level == "interval" ? corpus::MeasurementLevel::kInterval
                                           : corpus::MeasurementLevel::kOrdinal;
    const std::vector<std::pair<std::string, std::optional<Split>>> columns = {
        {"Overall", std::nullopt}, {"Train", Split::kTrain}, {"Dev", Split::kDev},
        {"Test", Split::kTest}};
    auto& out = ctx.out();
    out << std::left << std::setw(10) << "";
    for (const auto& [name, s] : columns) out << std::setw(16) << name;
    out << "\n" << std::setw(10) << "";
    for (std::size_t i = 0; i < columns.size(); ++i) out << std::setw(8) << "PPA" << std::setw(8) << "KA";
    out << "\n";
    Json table = Json::object();
    for (corpus::Axis axis : corpus::kAllAxes) {
      std::string name(corpus::ToString(axis));
      name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
      out << std::setw(10) << name;
      for (const auto& [col, s] : columns) {
        std::vector<corpus::PairAnnotation> subset;
        for (const auto* p : PairsIn(c, s)) subset.push_back(*p);
        const auto items = corpus::RatingsForAxis(subset, axis);
        Json cell = {{"pairs", subset.size()}};
        std::string ppa = "-", ka = "-";
        try {
          const auto r = corpus::PairwisePercentAgreement(items);
          ppa = Fixed(r.value, 2);
          cell["ppa"] = r.value;
        } catch (const Error&) {
          cell["ppa"] = nullptr;
        }
        try {
          const auto r = corpus::KrippendorffAlpha(items, lvl);
          ka = Fixed(r.value, 2);
          cell["alpha"] = r.value;
          cell["alpha_degenerate"] = r.degenerate;
        } catch (const Error&) {
          cell["alpha"] = nullptr;
        }
        out << std::setw(8) << ppa << std::setw(8) << ka;
        table[std::string(corpus::ToString(axis))][col] = cell;
      }
      out << "\n";
    }
    out << std::right;
    if (!out_path.empty()) WriteJson(out_path, {{"level", level}, {"table", table}});
  }
};

// reason

struct ReasonCommand {
  CorpusOptions corpus;
  std::string kind = "pair_score";
  std::string llm = "stub";
  std::string llm_url = "http://127.0.0.1:8082";
  std::size_t k_examples = 0;
  std::string split = "test";
  std::optional<std::size_t> limit;
  std::uint64_t seed = 0;
  std::size_t max_in_flight = 4;
  int max_tokens = 256;
  std::string cache;
  std::string out_path;

  void Add(CLI::App* cmd) {
    corpus.Add(cmd, true);
    cmd->add_option("--kind", kind, "Prompt kind")
        ->check(CLI::IsMember({"event", "emotion", "moral", "empathy_reasons", "pair_score"}));
    cmd->add_option("--llm", llm, "Completion backend")->check(CLI::IsMember({"stub", "http"}));
    cmd->add_option("--llm-url", llm_url, "Base URL of the completion service");
    cmd->add_option("--k-examples", k_examples, "Few-shot exemplars from the train split");
    cmd->add_option("--split", split, "Stories or pairs to process")
        ->check(CLI::IsMember({"train", "dev", "test", "all"}));
    cmd->add_option("--limit", limit, "Process at most this many items");
    cmd->add_option("--seed", seed, "Exemplar selection seed");
    cmd->add_option("--max-in-flight", max_in_flight, "Concurrent completion requests");
    cmd->add_option("--max-tokens", max_tokens, "Completion length limit");
    cmd->add_option("--summary-cache", cache, "Summary cache file");
    cmd->add_option("--out", out_path, "Results (JSONL)");
  }

  std::unique_ptr<reasoner::LlmBackend> MakeLlm() const {
    if (llm == "http") {
      reasoner::HttpLlmConfig c;
      c.base_url = llm_url;
      return std::make_unique<reasoner::HttpLlmBackend>(c);
    }
    return std::make_unique<reasoner::StubLlmBackend>();
  }

  void Run(const Context& ctx, const CLI::App* cmd) {
    const auto pk = reasoner::ParsePromptKind(kind);
    corpus.Validate(pk == reasoner::PromptKind::kPairScore);
    ctx.Header(cmd, seed);
    const Corpus c = corpus.Load();
    auto backend = MakeLlm();
    const auto tmpl = reasoner::PromptTemplate::Default(pk, k_examples);
    reasoner::Decoding decoding;
    decoding.max_tokens = max_tokens;
    Rng rng(seed);
    std::vector<Json> rows;
    auto& out = ctx.out();

    if (pk == reasoner::PromptKind::kPairScore) {
      auto train = PairsIn(c, Split::kTrain);
      rng.Shuffle(train);
      std::vector<reasoner::PairExample> examples;
      for (std::size_t i = 0; i < std::min(k_examples, train.size()); ++i) {
        examples.push_back({&c.Get(train[i]->pair.story_a), &c.Get(train[i]->pair.story_b),
                            static_cast<int>(std::lround(train[i]->Gold(corpus::Axis::kEmpathy)))});
      }
      auto targets = PairsIn(c, ParseSplitFilter(split));
      if (limit && targets.size() > *limit) targets.resize(*limit);
      std::map<corpus::StoryPair, int> llm_scores;
      std::map<corpus::StoryPair, double> human;
      for (const auto* p : targets) {
        const int score = reasoner::ScorePair(*backend, tmpl, c.Get(p->pair.story_a),
                                              c.Get(p->pair.story_b), examples, decoding);
        llm_scores[p->pair] = score;
        human[p->pair] = p->Gold(corpus::Axis::kEmpathy);
        rows.push_back({{"story_a", p->pair.story_a},
                        {"story_b", p->pair.story_b},
                        {"llm", score},
                        {"human", human[p->pair]}});
      }
      const auto cmp = reasoner::CompareLlmToHuman(llm_scores, human);
      out << "pairs " << cmp.pairs << "\n";
      out << "spearman " << (cmp.spearman ? Fixed(*cmp.spearman) : "n/a (" + cmp.spearman_error + ")")
          << "\n";
      out << "mse " << Fixed(cmp.mse) << "\n";
      out << "accuracy " << Fixed(cmp.classification.accuracy) << " f1 "
          << Fixed(cmp.classification.f1) << "\n";
      out << "llm_histogram";
      for (std::size_t i = 0; i < 4; ++i) out << " " << i + 1 << ":" << cmp.llm_histogram[i];
      out << "\n";
    } else {
      std::vector<const Story*> pool;
      for (const Story& s : c.stories()) {
        if (s.split == Split::kTrain && !reasoner::SummaryField(s, pk).empty()) pool.push_back(&s);
      }
      rng.Shuffle(pool);
      pool.resize(std::min(k_examples, pool.size()));
      std::vector<Story> targets = StoriesIn(c, ParseSplitFilter(split));
      if (limit && targets.size() > *limit) targets.resize(*limit);
      std::optional<reasoner::SummaryCache> summary_cache;
      if (!cache.empty()) {
        PrepareOutput(cache);
        summary_cache.emplace(cache);
      }
      const auto summaries = reasoner::SummarizeBatch(
          *backend, tmpl, targets, pool, summary_cache ? &*summary_cache : nullptr,
          max_in_flight, decoding);
      if (summary_cache) summary_cache->Save();
      std::vector<metrics::BleuSegment> segments;
      double rouge_sum = 0.0;
      for (const Story& s : targets) {
        const std::string& summary = summaries.at(s.id);
        rows.push_back({{"story_id", s.id}, {"kind", kind}, {"summary", summary}});
        const std::string& ref = reasoner::SummaryField(s, pk);
        if (!ref.empty()) {
          segments.push_back({summary, {ref}});
          rouge_sum += metrics::RougeL(summary, ref).f1;
        }
      }
      out << "stories " << targets.size() << "\n";
      if (!segments.empty()) {
        out << "references " << segments.size() << "\n";
        out << "bleu " << Fixed(metrics::CorpusBleu(segments)) << "\n";
        out << "rouge_l_f1 " << Fixed(rouge_sum / segments.size()) << "\n";
      }
    }
    if (!out_path.empty()) {
      PrepareOutput(out_path);
      jsonl::WriteAll(out_path, rows);
    }
  }
};

// export

struct ExportCommand {
  std::string store;
  std::string service_config;
  std::string out_path;
  std::string analysis_path;
  bool completed_only = false;

  void Add(CLI::App* cmd) {
    cmd->add_option("--store", store, "Session event log")->required();
    cmd->add_option("--service-config", service_config, "Service configuration for survey layout");
    cmd->add_option("--out", out_path, "Session records (JSONL)");
    cmd->add_option("--analysis", analysis_path, "Paired-analysis table and tests (JSON)");
    cmd->add_flag("--completed-only", completed_only, "Only export completed sessions");
  }

  void Run(const Context& ctx, const CLI::App* cmd) {
    RequireFile(store, "session store");
    if (!service_config.empty()) RequireFile(service_config, "service config");
    ctx.Header(cmd, 0);
    study::StudyConfig config;
    if (!service_config.empty()) config = study::LoadServiceConfig(service_config).study;
    if (config.prompts.empty()) config.prompts = study::StudyConfig::DefaultPrompts();
    auto session_store = std::make_shared<study::SessionStore>(store);
    study::StudyService service(config, session_store);
    study::ExportFilter filter;
    filter.completed_only = completed_only;
    const auto result = service.Export(filter);
    if (!out_path.empty()) {
      PrepareOutput(out_path);
      jsonl::WriteAll(out_path, result.records);
    }
    const Json analysis = result.AnalysisJson();
    if (!analysis_path.empty()) WriteJson(analysis_path, analysis);
    auto& out = ctx.out();
    out << "sessions " << result.records.size() << " completed " << result.table.size() << "\n";
    if (result.table.empty()) return;
    out << "measure      n    mean_diff  t         p_two     p_one     d\n";
    for (auto m : study::kMeasures) {
      const std::string name(m);
      auto it = result.tests.find(name);
      if (it == result.tests.end()) {
        out << std::left << std::setw(12) << name << std::right << " "
            << result.test_errors.at(name) << "\n";
        continue;
      }
      const auto& t = it->second;
      out << std::left << std::setw(12) << name << std::right << " " << std::setw(4) << t.n
          << " " << std::setw(10) << Fixed(t.mean_difference, 3) << " " << std::setw(9)
          << Fixed(t.t, 3) << " " << std::setw(9) << Fixed(t.p_two_tailed, 4) << " "
          << std::setw(9) << Fixed(t.p_one_tailed, 4) << " " << Fixed(t.cohens_d, 3);
      if (!t.note.empty()) out << "  (" << t.note << ")";
      out << "\n";
    }
  }
};

}  // namespace

int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Empathic similarity pipeline", "empathic"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  IngestCommand ingest;
  EmbedCommand embed;
  SampleCommand sample;
  TrainCommand train;
  EvaluateCommand evaluate;
  IndexCommand index;
  QueryCommand query;
  ServeCommand serve;
  AgreementCommand agreement;
  ReasonCommand reason;
  ExportCommand exporter;

  Context ctx(app, out);
  std::vector<std::pair<CLI::App*, std::function<void(const CLI::App*)>>> commands;
  auto add = [&](const char* name, const char* help, auto& command) {
    CLI::App* sub = app.add_subcommand(name, help);
    command.Add(sub);
    commands.emplace_back(sub, [&command, &ctx](const CLI::App* s) { command.Run(ctx, s); });
  };
  add("ingest", "Validate a corpus, optionally assign splits, and write it back", ingest);
  add("embed", "Embed story texts into a vector file", embed);
  add("sample-pairs", "Draw story pairs weighted toward high composite similarity", sample);
  add("train", "Train the projection head on annotated pairs", train);
  add("evaluate", "Score a head (or a prediction file) against gold ratings", evaluate);
  add("index", "Build a retrieval index", index);
  add("query", "Retrieve the nearest stories for a text", query);
  add("serve", "Run the user-study HTTP service", serve);
  add("agreement", "Inter-annotator agreement table", agreement);
  add("reason", "LLM summaries or pair scores", reason);
  add("export", "Export study sessions and the paired analysis", exporter);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    for (auto& [sub, run] : commands) {
      if (sub->parsed()) run(sub);
    }
  } catch (const Error& e) {
    err << "error: " << e.error_class() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace empathic::cli
