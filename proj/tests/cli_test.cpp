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

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "empathic/cli.hpp"
#include "empathic/corpus.hpp"
#include "empathic/jsonl.hpp"
#include "empathic/version.hpp"
#include "support/fixtures.hpp"

namespace empathic::cli {
namespace {

using nlohmann::json;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome Cli(std::vector<std::string> args) {
  args.insert(args.begin(), "empathic");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = Run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

json ReadJson(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

struct CorpusFiles {
  fixtures::TempDir dir;
  std::string stories = (dir / "stories.jsonl").string();
  std::string pairs = (dir / "pairs.jsonl").string();

  explicit CorpusFiles(std::size_t n_stories = 60, std::size_t n_pairs = 300) {
    const auto c = fixtures::SyntheticCorpus(n_stories, n_pairs, 11);
    corpus::WriteStories(stories, c.stories());
    corpus::WritePairs(pairs, c.pairs());
  }
  std::string Path(const std::string& name) const { return (dir / name).string(); }
};

TEST(Cli, UsageErrorsExitTwo) {
  auto r = Cli({});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error: usage"), std::string::npos);
  EXPECT_EQ(Cli({"frobnicate"}).code, 2);
  EXPECT_EQ(Cli({"train", "--epochs", "many"}).code, 2);
  EXPECT_EQ(Cli({"evaluate", "--split", "nowhere"}).code, 2);
}

TEST(Cli, Version) {
  const auto r = Cli({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find(kVersion), std::string::npos);
}

TEST(Cli, MissingInputIsConfigError) {
  fixtures::TempDir dir;
  const auto r = Cli({"ingest", "--stories", (dir / "absent.jsonl").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("config.path_missing"), std::string::npos) << r.err;
  EXPECT_EQ(Cli({"train", "--out", (dir / "ck.json").string()}).code, 1);
}

TEST(Cli, HeaderLine) {
  CorpusFiles f;
  const auto r = Cli({"ingest", "--stories", f.stories, "--pairs", f.pairs});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind(std::string("# empathic ") + std::string(kVersion) + " ingest seed=0 config=", 0),
            0u)
      << r.out;
  EXPECT_NE(r.out.find(" eigen="), std::string::npos);
}

TEST(Cli, IngestAssignsSplits) {
  CorpusFiles f;
  const auto out = f.Path("split.jsonl");
  const auto r = Cli({"ingest", "--stories", f.stories, "--pairs", f.pairs, "--assign-splits",
                      "--seed", "3", "--out-stories", out});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto c = corpus::LoadCorpus(out);
  std::size_t train = 0;
  for (const auto& s : c.stories()) {
    EXPECT_NE(s.split, corpus::Split::kUnsplit);
    if (s.split == corpus::Split::kTrain) ++train;
  }
  EXPECT_EQ(train, 45u);
}

TEST(Cli, AgreementTable) {
  CorpusFiles f;
  const auto out = f.Path("agreement.json");
  const auto r = Cli({"agreement", "--stories", f.stories, "--pairs", f.pairs, "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* word : {"Empathy", "Event", "Emotion", "Moral", "Overall", "Train", "Dev",
                           "Test", "PPA", "KA"}) {
    EXPECT_NE(r.out.find(word), std::string::npos) << word;
  }
  EXPECT_TRUE(std::filesystem::exists(out));
}

TEST(Cli, SamplePairsWritesLoadablePairs) {
  CorpusFiles f;
  const auto out = f.Path("sampled.jsonl");
  const auto r = Cli({"sample-pairs", "--stories", f.stories, "--split", "train", "-n", "20",
                      "--dim", "8", "--seed", "2", "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto c = corpus::LoadCorpus(f.stories, out);
  EXPECT_EQ(c.pairs().size(), 20u);
  const auto report = ReadJson(out + ".report.json");
  EXPECT_EQ(report.at("draws_per_bin").size(), report.at("bins").get<std::size_t>());
  EXPECT_EQ(report.at("candidates"), 45u * 44u / 2u);
  // deterministic given the seed
  const auto again = f.Path("again.jsonl");
  ASSERT_EQ(Cli({"sample-pairs", "--stories", f.stories, "--split", "train", "-n", "20", "--dim",
                 "8", "--seed", "2", "--out", again})
                .code,
            0);
  std::ifstream a(out), b(again);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}),
            std::string(std::istreambuf_iterator<char>(b), {}));
}

TEST(Cli, TrainThenEvaluateAgree) {
  CorpusFiles f(80, 600);
  const auto ck = f.Path("head.json");
  const auto report = f.Path("report.json");
  const auto t = Cli({"train", "--stories", f.stories, "--pairs", f.pairs, "--dim", "8",
                      "--epochs", "4", "--lr", "0.05", "--out", ck, "--report", report});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("best_dev_spearman"), std::string::npos);
  const auto rec = f.Path("eval.json");
  const auto e = Cli({"evaluate", "--stories", f.stories, "--pairs", f.pairs, "--dim", "8",
                      "--checkpoint", ck, "--split", "test", "--out", rec});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto j = ReadJson(rec);
  ASSERT_TRUE(j.at("dev_spearman").is_number());
  EXPECT_NEAR(j.at("dev_spearman").get<double>(), j.at("report_best_dev_spearman").get<double>(),
              1e-9);
  EXPECT_GT(j.at("pairs").get<int>(), 0);
  for (const char* key : {"pearson_r", "spearman_rho", "classification", "precision_at_1"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

TEST(Cli, EvaluatePredictionFile) {
  fixtures::TempDir dir;
  const auto preds = dir / "p.jsonl";
  jsonl::WriteAll(preds, {json{{"story_a", "a"}, {"story_b", "b"}, {"gold", 1.0}, {"predicted", 0.1}},
                          json{{"story_a", "a"}, {"story_b", "c"}, {"gold", 3.5}, {"predicted", 0.8}},
                          json{{"story_a", "b"}, {"story_b", "c"}, {"gold", 2.0}, {"predicted", 0.4}}});
  const auto rec = (dir / "e.json").string();
  const auto r = Cli({"evaluate", "--predictions", preds.string(), "--out", rec});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = ReadJson(rec);
  EXPECT_NEAR(j.at("spearman_rho").get<double>(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(j.at("classification").at("accuracy").get<double>(), 1.0);
}

TEST(Cli, IndexAndQuery) {
  CorpusFiles f;
  const auto idx = f.Path("idx.jsonl");
  ASSERT_EQ(Cli({"index", "--stories", f.stories, "--dim", "8", "--split", "all", "--out", idx}).code, 0);
  const auto c = corpus::LoadCorpus(f.stories);
  const auto r = Cli({"query", "--index", idx, "--dim", "8", "--text", c.stories()[5].text, "-k",
                      "3", "--stories", f.stories});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find(c.stories()[5].id), std::string::npos);
  // a checkpoint that did not build the index is refused
  const auto bad = Cli({"query", "--index", idx, "--dim", "4", "--text", "hello", "-k", "1"});
  EXPECT_EQ(bad.code, 1);
}

TEST(Cli, ReasonWithStub) {
  CorpusFiles f;
  const auto out = f.Path("scores.jsonl");
  const auto r = Cli({"reason", "--stories", f.stories, "--pairs", f.pairs, "--kind",
                      "pair_score", "--k-examples", "1", "--limit", "10", "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t rows = 0;
  jsonl::ForEachRecord(out, [&](const json& j, std::size_t) {
    ++rows;
    const int s = j.at("llm").get<int>();
    EXPECT_GE(s, 1);
    EXPECT_LE(s, 4);
  });
  EXPECT_EQ(rows, 10u);

  // the score file feeds evaluate directly; 1-4 on both sides, split at 2.5
  std::size_t agree = 0;
  jsonl::ForEachRecord(out, [&](const json& j, std::size_t) {
    agree += (j.at("human").get<double>() > 2.5) == (j.at("llm").get<double>() > 2.5);
  });
  const auto ev = Cli({"evaluate", "--predictions", out, "--out", f.Path("llm_eval.json")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  const json rec = ReadJson(f.Path("llm_eval.json"));
  EXPECT_EQ(rec.at("pairs").get<std::size_t>(), 10u);
  EXPECT_NEAR(rec.at("classification").at("accuracy").get<double>(), agree / 10.0, 1e-12);

  const auto sum = Cli({"reason", "--stories", f.stories, "--kind", "moral", "--limit", "3",
                        "--out", f.Path("m.jsonl")});
  EXPECT_EQ(sum.code, 0) << sum.err;
}

TEST(Cli, ConfigFileSuppliesDefaults) {
  CorpusFiles f;
  const auto cfg = f.Path("run.toml");
  {
    std::ofstream o(cfg);
    o << "[agreement]\nstories = \"" << f.stories << "\"\npairs = \"" << f.pairs
      << "\"\nlevel = \"nominal\"\n";
  }
  const auto r = Cli({"--config", cfg, "agreement"});
  EXPECT_EQ(r.code, 0) << r.err;
}

}  // namespace
}  // namespace empathic::cli
