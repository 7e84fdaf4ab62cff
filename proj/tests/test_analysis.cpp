#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "skipfuse/skipfuse.hpp"

using namespace skipfuse;
using fixtures::count_materialized;
using fixtures::make_config;

TEST(CountWeights, Pythia) {
  const auto r = count_weights(pythia_6_9b());
  EXPECT_EQ(r.qp_per_layer, 33'554'432u);
  EXPECT_EQ(r.kv_per_layer, 33'554'432u);
  EXPECT_EQ(r.ffn_per_layer, 134'217'728u);
  EXPECT_EQ(r.embed_total, 412'876'800u);
  EXPECT_EQ(billions(r.total), "6.9B");
  EXPECT_EQ(billions(r.total_without_qp), "5.8B");
}

TEST(CountWeights, Mistral) {
  const auto r = count_weights(mistral_7b());
  EXPECT_EQ(r.qp_per_layer, 33'554'432u);
  EXPECT_EQ(r.kv_per_layer, 8'388'608u);
  EXPECT_EQ(r.ffn_per_layer, 176'160'768u);
  EXPECT_EQ(r.embed_total, 262'144'000u);
  EXPECT_EQ(billions(r.total), "7.2B");
  EXPECT_EQ(billions(r.total_without_qp), "6.2B");
}

TEST(CountWeights, ToyConfigByHand) {
  // qp = 2*4*4, kv = 2*4*4, ffn = 2*4*8, embed = 2*4*3, total = 128 + 24
  const auto r = count_weights(make_config({4, 1, 1, 1, 8, 3}));
  EXPECT_EQ(r.qp_per_layer, 32u);
  EXPECT_EQ(r.kv_per_layer, 32u);
  EXPECT_EQ(r.ffn_per_layer, 64u);
  EXPECT_EQ(r.embed_total, 24u);
  EXPECT_EQ(r.total, 152u);
  EXPECT_EQ(r.total_without_qp, 120u);
}

TEST(CountWeights, InvalidConfig) {
  EXPECT_THROW(count_weights(make_config({10, 1, 4, 4, 8, 3})), Error);
}

TEST(Savings, Presets) {
  const auto p = savings_and_speedup(count_weights(pythia_6_9b()));
  EXPECT_EQ(p.percent_text, "16%");
  EXPECT_EQ(p.speedup_text, "1.19x");
  const auto m = savings_and_speedup(count_weights(mistral_7b()));
  EXPECT_EQ(m.percent_text, "15%");
  EXPECT_EQ(m.speedup_text, "1.17x");
}

TEST(Savings, ZeroLayers) {
  const auto s = savings_and_speedup(count_weights(make_config({8, 0, 2, 2, 16, 5})));
  EXPECT_EQ(s.percent_text, "0%");
  EXPECT_EQ(s.speedup_text, "1.00x");
}

TEST(CountWeights, InvariantsOverConfigSweep) {
  for (std::size_t d : {4, 8, 64, 4096})
    for (std::size_t heads : {1, 2, 4})
      for (std::size_t L : {0, 1, 3, 32})
        for (auto ffn : {FfnKind::Mlp, FfnKind::GluVariant}) {
          for (std::size_t kv = 1; kv <= heads; ++kv) {
            if (heads % kv) continue;
            auto c = make_config({d, L, heads, kv, 3 * d, 101}, Topology::Serial, ffn);
            const auto r = count_weights(c);
            EXPECT_EQ(r.total_without_qp + L * 2 * d * d, r.total);
            EXPECT_EQ(r.kv_per_layer, 2 * d * c.e());
            if (L > 0) {
              EXPECT_GT(r.speedup, 1.0);
            }
            EXPECT_NEAR(r.savings_fraction,
                        1.0 - double(r.total_without_qp) / double(r.total), 1e-15);
          }
        }
}

TEST(StoredCount, MatchesMaterializedTensors) {
  for (auto form : {ReducedForm::Full, ReducedForm::NoQP, ReducedForm::NoKP, ReducedForm::NoVP}) {
    for (auto ffn : {FfnKind::Mlp, FfnKind::GluVariant}) {
      auto c = make_config({16, 3, 4, 4, 24, 13}, Topology::Serial, ffn);
      c.reduced_form = form;
      EXPECT_EQ(stored_weight_count(c), count_materialized(random_model(c, 1)));
    }
  }
  auto c = make_config({16, 3, 4, 2, 24, 13}, Topology::Parallel);
  c.reduced_form = ReducedForm::NoQ;
  EXPECT_EQ(stored_weight_count(c), count_materialized(random_model(c, 1)));
}

TEST(StoredCount, FusedModelsMatchFormula) {
  const ModelWeights m = random_model(make_config({16, 3, 4, 4, 24, 13}), 2);
  for (auto v : {FusionVariant::EliminateQ, FusionVariant::EliminateK,
                 FusionVariant::EliminateV}) {
    const ModelWeights f = fuse_model(m, v);
    EXPECT_EQ(stored_weight_count(f.config), count_materialized(f));
    EXPECT_EQ(f.stored_floats(), count_materialized(f));
  }
}

TEST(Render, TableHasExpectedLines) {
  std::ostringstream os;
  render_table(os, "mistral-7b", mistral_7b(), count_weights(mistral_7b()));
  const std::string text = os.str();
  for (const char* needle : {"33,554,432", "8,388,608", "176,160,768", "262,144,000", "7.2B",
                             "6.2B", "15%", "1.17x", "GQA", "1,024"})
    EXPECT_NE(text.find(needle), std::string::npos) << needle;
}

TEST(Render, MachineOutputIsKeyValue) {
  std::ostringstream os;
  render_machine(os, "pythia-6.9b", pythia_6_9b(), count_weights(pythia_6_9b()));
  const KeyValues kv = parse_key_values(os.str());
  std::map<std::string, std::string> m(kv.begin(), kv.end());
  EXPECT_EQ(m["qp_per_layer"], "33554432");
  EXPECT_EQ(m["embed_total"], "412876800");
  EXPECT_EQ(m["savings_display"], "16%");
  EXPECT_EQ(m["speedup_display"], "1.19x");
}

TEST(Render, Commas) {
  EXPECT_EQ(with_commas(0), "0");
  EXPECT_EQ(with_commas(999), "999");
  EXPECT_EQ(with_commas(1000), "1,000");
  EXPECT_EQ(with_commas(7241465856ULL), "7,241,465,856");
}
