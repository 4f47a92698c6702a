#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "zsg/alignment.hpp"
#include "zsg/model.hpp"
#include "zsg/model_check.hpp"

using namespace zsg;

namespace {

EmbeddingTable random_table(std::size_t v, std::size_t d, unsigned seed) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < v; ++i) words.push_back("w" + std::to_string(i));
  return EmbeddingTable("rand", words, oracle::randn(v * d, seed), d);
}

void zero_all(std::vector<NamedParam> ps) {
  for (auto& p : ps)
    for (auto& v : p.tensor.mutable_data()) v = 0.0;
}

std::vector<double> encode(const Encoder& enc, const std::vector<double>& tokens, std::vector<std::size_t> lengths,
                           std::size_t dim) {
  Tape tape;
  const Tensor out = enc.forward(tape, Tensor::from({tokens.size() / dim, dim}, tokens), lengths);
  return {out.data().begin(), out.data().end()};
}

ModelConfig small_config(const std::string& enc, const std::string& align = "linear:1", std::uint64_t seed = 1) {
  ModelConfig mc;
  mc.text_dim = 5;
  mc.grounded_dim = 4;
  mc.image_dim = enc == "wl" ? 4 : 3;
  mc.alignment = parse_alignment(align);
  mc.encoder = parse_encoder(enc);
  mc.encoder.hidden = 6;
  mc.encoder.heads = 2;
  mc.seed = seed;
  return mc;
}

}  // namespace

TEST(Alignment, DefaultIsSingleBiasFreeLinear) {
  AlignmentConfig def;
  EXPECT_EQ(def.name(), "linear:1");
  EXPECT_FALSE(def.has_bias());
  Rng rng(0);
  AlignmentMap m(def, 5, 4, rng);
  ASSERT_EQ(m.layers().size(), 1u);
  EXPECT_FALSE(m.layers()[0].bias);
  EXPECT_EQ(m.parameters().size(), 1u);
  EXPECT_EQ(ModelConfig{}.grounded_dim, 1024u);
}

TEST(Alignment, ParseCanonicalNames) {
  for (const char* n : {"linear:1", "relu:1", "lrelu:1", "lrelu:2", "tanh:3"}) EXPECT_EQ(parse_alignment(n).name(), n);
  EXPECT_EQ(parse_alignment("leaky_relu:2").name(), "lrelu:2");
  EXPECT_TRUE(parse_alignment("relu:1").has_bias());
  EXPECT_THROW(parse_alignment("gelu:1"), ConfigError);
  EXPECT_THROW(parse_alignment("relu:0"), ConfigError);
}

TEST(Alignment, IdentityMap) {
  auto m = AlignmentMap::linear(Tensor::identity(4));
  const auto t = oracle::randn(4, 1);
  EXPECT_EQ(m.map_word(t), t);
}

TEST(Alignment, HomogeneityExact) {
  Rng rng(2);
  AlignmentMap m({}, 6, 3, rng);
  auto t = oracle::randn(6, 2);
  auto t2 = t;
  for (auto& x : t2) x *= 2;
  auto g = m.map_word(t), g2 = m.map_word(t2);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(g2[i], 2 * g[i]);
}

TEST(Alignment, MapWordMatchesTwoLoopOracle) {
  Rng rng(3);
  AlignmentMap m({}, 7, 5, rng);
  const auto t = oracle::randn(7, 3);
  const auto w = m.layers()[0].weight;
  const auto g = m.map_word(t);
  for (std::size_t c = 0; c < 5; ++c) {
    double s = 0;
    for (std::size_t r = 0; r < 7; ++r) s += t[r] * w.at(r, c);
    EXPECT_NEAR(g[c], s, 1e-12);
  }
  EXPECT_THROW(m.map_word(oracle::randn(6, 1)), DimensionError);
}

TEST(Alignment, MapWordAgreesWithTapeForward) {
  for (const char* n : {"linear:1", "relu:1", "lrelu:1", "lrelu:2"}) {
    Rng rng(4);
    AlignmentMap m(parse_alignment(n), 5, 4, rng);
    for (auto p : m.parameters())
      if (p.name.find("bias") != std::string::npos)
        for (auto& b : p.tensor.mutable_data()) b = 0.05;
    const auto x = oracle::randn(3 * 5, 5);
    Tape tape;
    const auto y = m.forward(tape, Tensor::from({3, 5}, x));
    for (std::size_t r = 0; r < 3; ++r) {
      const auto g = m.map_word(std::span<const double>(x).subspan(r * 5, 5));
      for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(g[c], y.at(r, c)) << n;
    }
  }
}

TEST(Alignment, LinearPreservesLinearCombinations) {
  Rng rng(5);
  AlignmentMap m({}, 8, 6, rng);
  for (unsigned trial = 0; trial < 100; ++trial) {
    const auto coef = oracle::randn(4, trial + 500);
    std::vector<double> mix(8, 0.0), expect(6, 0.0);
    for (unsigned k = 0; k < 4; ++k) {
      const auto t = oracle::randn(8, trial * 10 + k);
      const auto g = m.map_word(t);
      for (std::size_t i = 0; i < 8; ++i) mix[i] += coef[k] * t[i];
      for (std::size_t i = 0; i < 6; ++i) expect[i] += coef[k] * g[i];
    }
    const auto got = m.map_word(mix);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(got[i], expect[i], 1e-10);
  }
}

TEST(Encoders, ParseNames) {
  for (const char* n : {"wl", "bow", "gru", "lstm", "te:1", "te:2", "te:3"}) EXPECT_EQ(parse_encoder(n).name(), n);
  EXPECT_THROW(parse_encoder("rnn"), ConfigError);
  EXPECT_THROW(parse_encoder("te:x"), ConfigError);
  EXPECT_EQ(EncoderConfig{}.hidden, 2048u);
}

TEST(Encoders, LstmZeroWeightsGiveZero) {
  Rng rng(6);
  LstmEncoder enc(4, 6, 6, 1, rng);
  zero_all(enc.parameters());
  for (double v : encode(enc, oracle::randn(3 * 4, 1), {3}, 4)) EXPECT_EQ(v, 0.0);
}

TEST(Encoders, GruZeroWeightsGiveZero) {
  Rng rng(7);
  GruEncoder enc(4, 6, 6, 1, rng);
  zero_all(enc.parameters());
  for (double v : encode(enc, oracle::randn(3 * 4, 2), {3}, 4)) EXPECT_EQ(v, 0.0);
}

TEST(Encoders, LstmBlockShapes) {
  Rng rng(8);
  LstmEncoder enc(4, 6, 3, 2, rng);
  const auto ps = enc.parameters();
  // 2 layers x (4 W + 4 U + 4 b) + projection weight + bias
  ASSERT_EQ(ps.size(), 26u);
  EXPECT_EQ(ps[0].tensor.shape(), (Shape{4, 6}));   // layer 0 W_i
  EXPECT_EQ(ps[4].tensor.shape(), (Shape{6, 6}));   // layer 0 U_i
  EXPECT_EQ(ps[8].tensor.shape(), (Shape{6}));      // layer 0 b_i
  EXPECT_EQ(ps[12].tensor.shape(), (Shape{6, 6}));  // layer 1 W_i
  EXPECT_EQ(enc.output_dim(), 3u);
  Rng rng2(8);
  LstmEncoder same(4, 6, 6, 1, rng2);
  EXPECT_EQ(same.parameters().size(), 12u);  // hidden == output: no projection
}

TEST(Encoders, BowIdentityHiddenIsTanhOfMean) {
  Rng rng(9);
  BowEncoder enc(4, 4, 4, rng);
  auto set_identity = [](nn::Linear& l) {
    auto w = l.weight.mutable_data();
    for (std::size_t i = 0; i < 16; ++i) w[i] = (i % 5 == 0) ? 1.0 : 0.0;
    for (auto& b : l.bias.mutable_data()) b = 0.0;
  };
  set_identity(enc.hidden_layer());
  set_identity(enc.projection());
  auto tokens = oracle::randn(3 * 4, 3, 0.03);
  for (auto& v : tokens) v = std::clamp(v, -0.099, 0.099);
  const auto out = encode(enc, tokens, {3}, 4);
  for (std::size_t j = 0; j < 4; ++j) {
    const double mean = (tokens[j] + tokens[4 + j] + tokens[8 + j]) / 3.0;
    EXPECT_NEAR(out[j], std::tanh(mean), 1e-12);
  }
}

TEST(Encoders, TransformerPermutationInvariantWithoutPositions) {
  Rng rng(10);
  TransformerEncoder enc(4, 8, 3, 2, 2, false, rng);
  const auto x = oracle::randn(4 * 4, 4);
  std::vector<double> perm;
  for (int r : {2, 0, 3, 1}) perm.insert(perm.end(), x.begin() + r * 4, x.begin() + r * 4 + 4);
  const auto a = encode(enc, x, {4}, 4), b = encode(enc, perm, {4}, 4);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], 1e-9);

  Rng rng2(10);
  TransformerEncoder pos(4, 8, 3, 2, 2, true, rng2);
  const auto c = encode(pos, x, {4}, 4), d = encode(pos, perm, {4}, 4);
  double diff = 0;
  for (std::size_t i = 0; i < 3; ++i) diff += std::abs(c[i] - d[i]);
  EXPECT_GT(diff, 1e-6);
}

TEST(Encoders, TransformerHeadsMustDivide) {
  Rng rng(11);
  EXPECT_THROW(TransformerEncoder(5, 8, 3, 1, 2, true, rng), ConfigError);
}

TEST(Encoders, PaddingNeverContributes) {
  for (const char* kind : {"bow", "gru", "lstm", "te:1"}) {
    GroundingModel m(small_config(kind));
    const auto& enc = m.encoder();
    const auto a = oracle::randn(2 * 4, 12), b = oracle::randn(4 * 4, 13);
    std::vector<double> both = a;
    both.insert(both.end(), b.begin(), b.end());
    const auto batched = encode(enc, both, {2, 4}, 4);
    const auto solo_a = encode(enc, a, {2}, 4), solo_b = encode(enc, b, {4}, 4);
    const std::size_t o = enc.output_dim();
    for (std::size_t i = 0; i < o; ++i) {
      EXPECT_EQ(batched[i], solo_a[i]) << kind;
      EXPECT_EQ(batched[o + i], solo_b[i]) << kind;
    }
  }
}

TEST(Encoders, RecurrentPrefixDeterminism) {
  for (const char* kind : {"gru", "lstm"}) {
    GroundingModel m(small_config(kind));
    const auto x = oracle::randn(4 * 4, 14);
    auto y = x;
    for (std::size_t i = 8; i < 16; ++i) y[i] += 1.0;  // change the tail only
    const std::vector<double> px(x.begin(), x.begin() + 8), py(y.begin(), y.begin() + 8);
    EXPECT_EQ(encode(m.encoder(), px, {2}, 4), encode(m.encoder(), py, {2}, 4)) << kind;
    EXPECT_NE(encode(m.encoder(), x, {4}, 4), encode(m.encoder(), y, {4}, 4)) << kind;
  }
}

TEST(Encoders, EmptySequenceAndDimErrors) {
  GroundingModel m(small_config("lstm"));
  EXPECT_THROW(encode(m.encoder(), oracle::randn(8, 1), {2, 0}, 4), Error);
  EXPECT_THROW(encode(m.encoder(), oracle::randn(10, 1), {2}, 5), DimensionError);
  GroundingModel wl(small_config("wl"));
  EXPECT_THROW(encode(wl.encoder(), oracle::randn(8, 1), {2}, 4), DimensionError);
  auto bad = small_config("wl");
  bad.image_dim = 3;
  EXPECT_THROW(GroundingModel{bad}, ConfigError);
}

TEST(PredictImage, ZeroLstmGivesZero) {
  auto mc = small_config("lstm");
  mc.image_dim = 6;  // hidden == image dim: no projection
  GroundingModel m(mc);
  zero_all(m.parameters());
  auto table = random_table(3, 5, 15);
  for (double v : predict_image(m, {"w1"}, table)) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(predict_image(m, {"nope", "missing"}, table), DataError);
}

TEST(PredictImage, OrderMattersForLstm) {
  GroundingModel m(small_config("lstm"));
  auto table = random_table(3, 5, 16);
  const auto fwd = predict_image(m, {"w0", "w1", "w2"}, table);
  const auto rev = predict_image(m, {"w2", "w1", "w0"}, table);
  double l2 = 0;
  for (std::size_t i = 0; i < fwd.size(); ++i) l2 += (fwd[i] - rev[i]) * (fwd[i] - rev[i]);
  EXPECT_GT(std::sqrt(l2), 0.0);
}

TEST(PredictImage, PaperDefaultOutputIs2048) {
  ModelConfig mc;  // d=300, c=1024, LSTM 2048 units, image 2048
  GroundingModel m(mc);
  EXPECT_EQ(m.encoder().output_dim(), 2048u);
  auto table = random_table(2, 300, 17);
  EXPECT_EQ(predict_image(m, {"w0", "w1"}, table).size(), 2048u);
}

TEST(Ground, IdentityEqualsSource) {
  auto table = random_table(6, 4, 18);
  auto g = ground_vocabulary(AlignmentMap::linear(Tensor::identity(4)), table);
  EXPECT_EQ(g.table.values().size(), table.values().size());
  EXPECT_TRUE(std::equal(g.table.values().begin(), g.table.values().end(), table.values().begin()));
  EXPECT_EQ(g.table.vocab(), table.vocab());
  EXPECT_EQ(g.source_name, "rand");
}

TEST(Ground, RowsAreMapWord) {
  auto table = random_table(5, 4, 19);
  Rng rng(20);
  AlignmentMap m({}, 4, 3, rng);
  auto g = ground_vocabulary(m, table);
  EXPECT_EQ(g.table.size(), 5u);
  EXPECT_EQ(g.table.dim(), 3u);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto r = m.map_word(table.row(i));
    EXPECT_TRUE(std::equal(r.begin(), r.end(), g.table.row(i).begin()));
  }
  EXPECT_THROW(ground_vocabulary(m, random_table(2, 5, 1)), DimensionError);
}

TEST(Ground, SubVocabularyBitwise) {
  auto table = random_table(40, 7, 21);
  Rng rng(22);
  AlignmentMap m(parse_alignment("lrelu:2"), 7, 5, rng);
  const auto full = ground_vocabulary(m, table);
  const std::vector<std::string> sub = {"w31", "w2", "w17"};
  const auto part = ground_vocabulary(m, table.subset(sub));
  for (std::size_t i = 0; i < sub.size(); ++i) {
    const auto a = part.table.row(i), b = full.table.row(*full.table.index_of(sub[i]));
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  for (const char* kind : {"wl", "bow", "gru", "lstm", "te:2"}) {
    GroundingModel m(small_config(kind, "lrelu:2", 9));
    std::stringstream s;
    write_checkpoint(s, m);
    const std::string first = s.str();
    GroundingModel back = read_checkpoint(s);
    EXPECT_EQ(back.config(), m.config()) << kind;
    EXPECT_EQ(back.snapshot(), m.snapshot()) << kind;
    std::stringstream again;
    write_checkpoint(again, back);
    EXPECT_EQ(again.str(), first) << kind;
  }
}

TEST(Checkpoint, RejectsGarbage) {
  std::istringstream bad("hello\n");
  EXPECT_THROW(read_checkpoint(bad), DataError);
  GroundingModel m(small_config("lstm"));
  std::stringstream s;
  write_checkpoint(s, m);
  std::string text = s.str();
  text.resize(text.size() - 4);  // cut the end marker
  std::istringstream cut(text);
  EXPECT_THROW(read_checkpoint(cut), DataError);
}

TEST(Model, SeedDeterminesParameters) {
  GroundingModel a(small_config("gru", "relu:1", 3)), b(small_config("gru", "relu:1", 3)),
      c(small_config("gru", "relu:1", 4));
  EXPECT_EQ(a.snapshot(), b.snapshot());
  EXPECT_NE(a.snapshot(), c.snapshot());
  EXPECT_EQ(a.config_hash(), b.config_hash());
  EXPECT_NE(a.config_hash(), c.config_hash());
}

TEST(Model, FullPipelineGradcheckThreeTokens) {
  auto mc = toy_model_config(parse_encoder("lstm"), {}, 0);
  GroundingModel m(mc);
  const auto tokens = Tensor::from({3, 5}, oracle::randn(15, 23));
  const auto target = Tensor::from({1, 3}, oracle::randn(3, 24));
  const std::size_t len[] = {3};
  auto r = grad_check([&](Tape& t) { return t.mse_loss(m.forward(t, tokens, len), target); }, m.parameters());
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Model, GradcheckEveryEncoderAndAlignment) {
  for (const char* e : {"wl", "bow", "gru", "lstm", "te:1", "te:2"})
    for (const char* a : {"linear:1", "relu:1", "lrelu:1", "lrelu:2"})
      for (std::uint64_t seed : {0u, 1u, 2u}) {
        auto r = check_model_gradients(toy_model_config(parse_encoder(e), parse_alignment(a), seed), seed);
        EXPECT_LT(r.max_rel_error, 1e-4) << e << ' ' << a << " seed " << seed << " worst " << r.worst_param;
      }
}

TEST(Model, CorruptedAdjointFailsGradcheck) {
  auto r = check_model_gradients(toy_model_config(parse_encoder("lstm"), {}, 0), 0, true);
  EXPECT_GT(r.max_rel_error, 1e-2);
  EXPECT_FALSE(r.worst_param.empty());
}
