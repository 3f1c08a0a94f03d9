#include <doctest.h>

#include <cmath>

#include "expltv/error.hpp"
#include "expltv/features.hpp"

using namespace expltv;

namespace {

FeatureSchema small_schema() {
  FeatureSchema s;
  s.dense = {{"dense_0", 2.0, 0.5}, {"dense_1", -1.0, 3.0}};
  s.categorical = {{"cat_0", 5}};
  s.sequences = {{"seq_0", 7, 4}};
  return s;
}

UserRecord record(std::vector<double> dense, int cat, std::vector<int> seq) {
  UserRecord u;
  u.dense = std::move(dense);
  u.categorical = {cat};
  u.sequences = {std::move(seq)};
  return u;
}

Matrix embed_one(const EmbeddingTables& t, const EncodedUser& u) {
  return t.forward(std::span(&u, 1), nullptr);
}

}  // namespace

TEST_CASE("encode normalizes, clamps, and maps unknown values to index 0") {
  const FeatureSchema s = small_schema();
  const EncodedUser e = encode(record({2.0, 1e9}, 9, {1, 8, 3, 2, 6, 5}), s);
  CHECK(e.dense[0] == 0.0);          // value at the mean
  CHECK(e.dense[1] == s.clamp);      // huge value clamped
  CHECK(e.categorical[0] == 0);      // out of vocabulary
  CHECK(e.sequences[0] == std::vector<int>{1, 0, 3, 2});  // OOV token -> 0, truncated to max_len
  CHECK(encode(record({2.0, 0.0}, -3, {}), s).categorical[0] == 0);
  CHECK(encode(record({2.0, 0.0}, 1, {}), s).sequences[0].empty());
}

TEST_CASE("encode rejects a record with a missing field and names it") {
  const FeatureSchema s = small_schema();
  UserRecord u = record({1.0}, 1, {});
  try {
    encode(u, s);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("dense_1") != std::string::npos);
  }
  u = record({1.0, 2.0}, 1, {});
  u.sequences.clear();
  CHECK_THROWS_WITH_AS(encode(u, s), doctest::Contains("seq_0"), DataError);
}

TEST_CASE("schema fit uses train statistics and cardinality max + 1") {
  Dataset d;
  d.layout = {1, 1, 1};
  for (int i = 0; i < 4; ++i) {
    UserRecord u;
    u.dense = {static_cast<double>(i)};
    u.categorical = {i * 2};
    u.sequences = {{i, i + 1}};
    d.users.push_back(u);
  }
  const FeatureSchema s = FeatureSchema::fit(d, 3);
  CHECK(s.dense[0].mean == 1.5);
  CHECK(s.dense[0].sd == doctest::Approx(std::sqrt(1.25)));
  CHECK(s.categorical[0].cardinality == 7);
  CHECK(s.sequences[0].vocab == 5);
  CHECK(s.sequences[0].max_len == 3);
}

TEST_CASE("all-zero dense block with zero bias gives a zero dense sub-embedding") {
  const FeatureSchema s = small_schema();
  EmbeddingTables t(s, 4);
  std::mt19937_64 rng(1);
  t.init(rng);
  const Matrix e = embed_one(t, encode(record({2.0, -1.0}, 2, {3}), s));
  CHECK(e.cols() == 4 * 3);
  for (std::size_t j = 0; j < 4; ++j) CHECK(e(0, j) == 0.0);
}

TEST_CASE("sequence pooling: singleton equals the table row, repeats and order do not matter") {
  const FeatureSchema s = small_schema();
  EmbeddingTables t(s, 4);
  std::mt19937_64 rng(2);
  t.init(rng);
  ParamStore store;
  t.register_params(store);
  const Parameter* table = store.find("embed.seq_0");
  REQUIRE(table != nullptr);

  const Matrix one = embed_one(t, encode(record({0.0, 0.0}, 1, {3}), s));
  const Matrix two = embed_one(t, encode(record({0.0, 0.0}, 1, {3, 3}), s));
  const Matrix empty = embed_one(t, encode(record({0.0, 0.0}, 1, {}), s));
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(one(0, 8 + j) == table->value(3, j));
    CHECK(two(0, 8 + j) == one(0, 8 + j));
    CHECK(empty(0, 8 + j) == 0.0);
  }

  const Matrix fwd = embed_one(t, encode(record({0.0, 0.0}, 1, {1, 2, 5, 6}), s));
  const Matrix rev = embed_one(t, encode(record({0.0, 0.0}, 1, {6, 5, 2, 1}), s));
  for (std::size_t j = 0; j < fwd.cols(); ++j) CHECK(fwd(0, j) == doctest::Approx(rev(0, j)).epsilon(1e-14));
}

TEST_CASE("interaction encoder: zero weights give zero output, equal inputs equal outputs") {
  MlpInteraction enc(6, 5, 3);
  Matrix x(2, 6);
  for (std::size_t i = 0; i < 6; ++i) x(0, i) = x(1, i) = 0.1 * static_cast<double>(i) - 0.2;
  const Matrix zero = enc.forward(x, nullptr);
  for (double v : zero.values()) CHECK(v == 0.0);

  std::mt19937_64 rng(4);
  enc.init(rng);
  const Matrix y = enc.forward(x, nullptr);
  CHECK(y.cols() == 3);
  for (std::size_t j = 0; j < 3; ++j) CHECK(y(0, j) == y(1, j));
  CHECK_THROWS_AS(enc.forward(Matrix(1, 4), nullptr), ConfigError);
}

TEST_CASE("gradients through embedding and interaction match finite differences") {
  const FeatureSchema s = small_schema();
  EmbeddingTables t(s, 3);
  MlpInteraction enc(t.output_dim(), 5, 4);
  std::mt19937_64 rng(8);
  t.init(rng);
  enc.init(rng);
  ParamStore store;
  t.register_params(store);
  enc.register_params(store);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (Parameter* p : store.blocks())
    if (p->name.ends_with(".b"))
      for (double& b : p->value.values()) b = u(rng);

  std::vector<EncodedUser> batch;
  batch.push_back(encode(record({2.4, 0.5}, 2, {1, 4}), s));
  batch.push_back(encode(record({1.1, -4.0}, 4, {}), s));
  batch.push_back(encode(record({2.0, 3.0}, 0, {6, 6, 2}), s));
  const auto loss = [&](bool backward) {
    EmbedCache ec;
    EncoderCache xc;
    const Matrix e = t.forward(batch, backward ? &ec : nullptr);
    const Matrix z = enc.forward(e, backward ? &xc : nullptr);
    double v = 0.0;
    Matrix g(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double c = std::cos(0.3 + static_cast<double>(i));
      v += c * z.values()[i];
      g.values()[i] = c;
    }
    if (backward) t.backward(ec, enc.backward(xc, g));
    return v;
  };
  const GradCheckReport rep = grad_check(store, loss);
  for (const auto& b : rep.blocks) {
    CAPTURE(b.name);
    CHECK(b.passed);
  }
}

TEST_CASE("extreme dense values and empty sequences still give finite embeddings") {
  const FeatureSchema s = small_schema();
  EmbeddingTables t(s, 8);
  MlpInteraction enc(t.output_dim(), 8, 8);
  std::mt19937_64 rng(3);
  t.init(rng);
  enc.init(rng);
  const EncodedUser e = encode(record({-1e300, 1e300}, 99, {}), s);
  CHECK(enc.forward(embed_one(t, e), nullptr).all_finite());
}
