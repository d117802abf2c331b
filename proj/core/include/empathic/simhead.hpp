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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "empathic/embedding.hpp"

namespace empathic::simhead {

using embedding::EmbeddingVector;

// Square matrix H applied to frozen backbone embeddings; similarity between
// two stories is cosine(H u, H v).
struct ProjectionHead {
  std::string backbone_name;
  Eigen::MatrixXd matrix;

  std::size_t dim() const { return static_cast<std::size_t>(matrix.rows()); }

  static ProjectionHead Identity(std::size_t dim, std::string backbone_name);
  // Identity plus N(0, sigma^2) entries from a seeded generator.
  static ProjectionHead NoisyIdentity(std::size_t dim, std::string backbone_name,
                                      double sigma, std::uint64_t seed);

  // Stable identifier derived from the backbone name and matrix bytes.
  std::string Id() const;
};

// Maps a 1-4 Likert score to [0, 1] via (x - 1) / 3.
double NormalizeLabel(double likert);

EmbeddingVector Project(const ProjectionHead& head, const EmbeddingVector& u);

// (cosine(Hu, Hv) - gold01)^2
double PairLoss(const ProjectionHead& head, const EmbeddingVector& u,
                const EmbeddingVector& v, double gold01);

// d PairLoss / d H.
Eigen::MatrixXd PairLossGradient(const ProjectionHead& head, const EmbeddingVector& u,
                                 const EmbeddingVector& v, double gold01);

struct TrainingPair {
  EmbeddingVector u;
  EmbeddingVector v;
  double gold01 = 0.0;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 8;
  std::size_t epochs = 30;
  double warmup_fraction = 0.1;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;  // global gradient norm; <= 0 disables clipping
};

struct TrainReport {
  std::vector<double> train_loss;     // mean pair loss per epoch
  std::vector<double> dev_spearman;   // NaN when undefined (empty or constant)
  double initial_dev_spearman = 0.0;  // head_init on the dev pairs
  std::size_t best_epoch = 0;         // 1-based; 0 = no training happened
  std::size_t steps = 0;
  double seconds = 0.0;
};

// Linear warmup from 0 then linear decay to 0, as a multiplier of the base
// learning rate for the given 0-based step.
double ScheduleMultiplier(std::size_t step, std::size_t warmup_steps, std::size_t total_steps);

// Mini-batch gradient descent on the mean pair loss. Returns the head from
// the epoch with the best dev Spearman (last epoch when dev is empty).
std::pair<ProjectionHead, TrainReport> Train(const ProjectionHead& head_init,
                                             const std::vector<TrainingPair>& train,
                                             const std::vector<TrainingPair>& dev,
                                             const TrainConfig& config);

// Spearman between cosine(Hu, Hv) and gold over the pairs; NaN if undefined.
double HeadSpearman(const ProjectionHead& head, const std::vector<TrainingPair>& pairs);

struct Checkpoint {
  ProjectionHead head;
  TrainConfig config;
  std::optional<TrainReport> report;
};

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace empathic::simhead
