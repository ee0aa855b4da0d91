#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "doctest.h"
#include "dysfluency/grad_check.hpp"
#include "dysfluency/model.hpp"

using namespace dysfluency;

namespace {

HeadConfig small_config(int classes = 6) {
  HeadConfig cfg;
  cfg.feature_dim = 8;
  cfg.projector_dim = 4;
  cfg.num_classes = classes;
  cfg.seed = 17;
  return cfg;
}

Matrix random_features(std::mt19937_64& rng, Eigen::Index t, Eigen::Index d) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(t, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Scalar-loop re-implementation of the head's forward pass.
struct NaiveOutput {
  std::vector<double> main, aux, weights;
};

NaiveOutput naive_forward(const HeadParams& p, const Matrix& h) {
  const auto t = static_cast<std::size_t>(h.rows());
  const auto d = static_cast<std::size_t>(h.cols());
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += h(i, j) / static_cast<double>(t);
  auto project = [&](const std::vector<double>& x, const Matrix& w) {
    std::vector<double> out(static_cast<std::size_t>(w.cols()), 0.0);
    for (std::size_t j = 0; j < out.size(); ++j)
      for (std::size_t i = 0; i < x.size(); ++i) out[j] += x[i] * w(i, j);
    return out;
  };
  const auto q = project(mean, p.w_q);
  std::vector<double> scores(t);
  std::vector<std::vector<double>> values(t);
  for (std::size_t i = 0; i < t; ++i) {
    std::vector<double> frame(d);
    for (std::size_t j = 0; j < d; ++j) frame[j] = h(i, j);
    const auto k = project(frame, p.w_k);
    values[i] = project(frame, p.w_v);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += q[j] * k[j];
    scores[i] = s / std::sqrt(static_cast<double>(d));
  }
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double z = 0.0;
  NaiveOutput out;
  for (double s : scores) z += std::exp(s - mx);
  for (double s : scores) out.weights.push_back(std::exp(s - mx) / z);
  std::vector<double> context(d, 0.0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < d; ++j) context[j] += out.weights[i] * values[i][j];
  auto proj = project(context, p.w_proj);
  for (std::size_t j = 0; j < proj.size(); ++j) proj[j] = std::tanh(proj[j] + p.b_proj(0, static_cast<Eigen::Index>(j)));
  auto logits = project(proj, p.w_main);
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out.main.push_back(1.0 / (1.0 + std::exp(-(logits[c] + p.b_main(0, static_cast<Eigen::Index>(c))))));
  }
  auto aux = project(proj, p.w_aux);
  const double a0 = aux[0] + p.b_aux(0, 0);
  const double a1 = aux[1] + p.b_aux(0, 1);
  const double m = std::max(a0, a1);
  const double za = std::exp(a0 - m) + std::exp(a1 - m);
  out.aux = {std::exp(a0 - m) / za, std::exp(a1 - m) / za};
  return out;
}

void randomize_biases(HeadParams& p, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.5);
  for (Matrix* b : {&p.b_proj, &p.b_main, &p.b_aux})
    for (Eigen::Index i = 0; i < b->size(); ++i) b->data()[i] = n(rng);
}

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "dysfluency_test_model";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("init_head shapes and determinism") {
  const HeadConfig cfg = small_config(7);
  const HeadParams a = init_head(cfg);
  const HeadParams b = init_head(cfg);
  for (std::size_t i = 0; i < HeadParams::kTensorCount; ++i) CHECK(*a.tensors()[i] == *b.tensors()[i]);
  CHECK(a.w_main.rows() == 4);
  CHECK(a.w_main.cols() == 7);
  CHECK(a.w_q.rows() == 8);
  CHECK(a.w_proj.cols() == 4);
  CHECK(a.w_aux.cols() == 2);
  CHECK(a.b_main.isZero());
  CHECK(a.parameter_count() == static_cast<std::size_t>(3 * 64 + 8 * 4 + 4 + 4 * 7 + 7 + 4 * 2 + 2));

  HeadConfig other = cfg;
  other.seed = 18;
  CHECK(init_head(other).flatten() != a.flatten());

  Vector flat = a.flatten();
  flat.array() += 1.0;
  HeadParams c = a;
  c.assign_flat(flat);
  CHECK(c.flatten() == flat);
  CHECK_THROWS_AS(c.assign_flat(Vector::Zero(3)), ShapeError);
}

TEST_CASE("config validation") {
  HeadConfig cfg = small_config();
  cfg.aux_outputs = 3;
  CHECK_THROWS_AS(init_head(cfg), InvalidArgument);
  cfg = small_config();
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(init_head(cfg), InvalidArgument);
  cfg = small_config();
  cfg.projector_dim = 0;
  CHECK_THROWS_AS(init_head(cfg), InvalidArgument);
  CHECK(pooling_mode_from_string("mean") == PoolingMode::kMean);
  CHECK(to_string(PoolingMode::kMeanKeyValue) == "mean_kv");
  CHECK_THROWS_AS(pooling_mode_from_string("max"), InvalidArgument);
}

TEST_CASE("forward matches a scalar-loop implementation") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    HeadConfig cfg = small_config(trial % 2 ? 7 : 6);
    cfg.seed = static_cast<std::uint64_t>(trial);
    HeadParams p = init_head(cfg);
    randomize_biases(p, rng);
    const Matrix h = random_features(rng, 1 + trial * 7, 8);
    const ForwardOutput out = forward(p, h);
    const NaiveOutput ref = naive_forward(p, h);
    for (std::size_t c = 0; c < ref.main.size(); ++c)
      CHECK(out.main_probs(0, static_cast<Eigen::Index>(c)) == doctest::Approx(ref.main[c]).epsilon(1e-12));
    CHECK(out.aux_probs(0, 0) == doctest::Approx(ref.aux[0]).epsilon(1e-12));
    for (std::size_t i = 0; i < ref.weights.size(); ++i)
      CHECK(out.attn_weights(0, static_cast<Eigen::Index>(i)) == doctest::Approx(ref.weights[i]).epsilon(1e-12));
  }
}

TEST_CASE("forward properties") {
  std::mt19937_64 rng(29);
  const HeadParams p = init_head(small_config());

  SUBCASE("single frame") {
    const Matrix h = random_features(rng, 1, 8);
    const ForwardOutput out = forward(p, h);
    CHECK(out.attn_weights.cols() == 1);
    CHECK(out.attn_weights(0, 0) == 1.0);
    HeadParams mean_pool = p;
    mean_pool.config.pooling = PoolingMode::kMean;
    const ForwardOutput same = forward(mean_pool, h);
    CHECK((out.main_probs - same.main_probs).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("row permutation leaves the outputs unchanged") {
    const Matrix h = random_features(rng, 12, 8);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(12);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + 12, rng);
    const Matrix hp = perm * h;
    const ForwardOutput a = forward(p, h);
    const ForwardOutput b = forward(p, hp);
    CHECK((a.main_probs - b.main_probs).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.aux_probs - b.aux_probs).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("probabilities are well formed") {
    for (int i = 0; i < 20; ++i) {
      const ForwardOutput out = forward(p, random_features(rng, 5, 8));
      CHECK((out.main_probs.array() > 0.0).all());
      CHECK((out.main_probs.array() < 1.0).all());
      CHECK(out.aux_probs.sum() == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(out.attn_weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
  SUBCASE("mean pooling uses uniform weights") {
    HeadParams mp = p;
    mp.config.pooling = PoolingMode::kMean;
    const ForwardOutput out = forward(mp, random_features(rng, 10, 8));
    CHECK((out.attn_weights.array() == 0.1).all());
  }
  SUBCASE("degenerate key/value reading ignores the frame order and spread") {
    HeadParams kv = p;
    kv.config.pooling = PoolingMode::kMeanKeyValue;
    const Matrix h = random_features(rng, 6, 8);
    const Matrix collapsed = Matrix(mean_over_rows(h));
    CHECK((forward(kv, h).main_probs - forward(kv, collapsed).main_probs).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("raw-mean query") {
    HeadParams raw = p;
    raw.config.query_projection = false;
    raw.w_q.setZero();  // unused in this mode
    const Matrix h = random_features(rng, 6, 8);
    HeadParams ident = p;
    ident.w_q = Matrix::Identity(8, 8);
    CHECK((forward(raw, h).main_probs - forward(ident, h).main_probs).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("dropout only in train mode, deterministic per seed") {
    HeadParams dp = p;
    dp.config.dropout_rate = 0.5;
    const Matrix h = random_features(rng, 6, 8);
    CHECK(forward(dp, h).main_probs == forward(p, h).main_probs);
    CHECK(forward(dp, h, true, 3).main_probs == forward(dp, h, true, 3).main_probs);
    bool differs = false;
    for (std::uint64_t s = 0; s < 10 && !differs; ++s) differs = forward(dp, h, true, s).main_probs != forward(dp, h).main_probs;
    CHECK(differs);
  }
  SUBCASE("wrong feature width and empty sequences are rejected") {
    CHECK_THROWS_AS(forward(p, random_features(rng, 5, 7)), ShapeError);
    CHECK_THROWS_AS(forward(p, Matrix(0, 8)), InvalidArgument);
  }
}

TEST_CASE("predict thresholds inclusively") {
  Matrix p(1, 3);
  p << 0.9, 0.1, 0.5;
  CHECK(predict(p, 0.5) == LabelVector{1, 0, 1});
  CHECK(predict(Matrix::Constant(1, 4, 0.49), 0.5) == LabelVector{0, 0, 0, 0});
  Matrix single(1, 1);
  single << 0.77;
  CHECK(predict(single, 0.8) == LabelVector{0});
  CHECK_THROWS_AS(predict(p, 1.5), InvalidArgument);
  CHECK_THROWS_AS(predict(p, -0.1), InvalidArgument);
}

TEST_CASE("batch loss semantics") {
  std::mt19937_64 rng(31);
  const HeadParams p = init_head(small_config());
  const Matrix h = random_features(rng, 5, 8);
  const Matrix h2 = random_features(rng, 9, 8);
  const LabelVector y{0, 1, 0, 0, 1, 0};
  LossConfig cfg;

  SUBCASE("w_main = 1 leaves only the focal term") {
    cfg.w_main = 1.0;
    const Example ex{&h, y, 1};
    const double expected = focal_multi(forward(p, h).main_probs, y, cfg.alpha, cfg.gamma);
    CHECK(batch_loss(p, std::span<const Example>(&ex, 1), cfg) == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("a duplicated clip has the same mean loss") {
    const std::vector<Example> one{{&h, y, 0}};
    const std::vector<Example> two{{&h, y, 0}, {&h, y, 0}};
    CHECK(batch_loss(p, two, cfg) == doctest::Approx(batch_loss(p, one, cfg)).epsilon(1e-14));
  }
  SUBCASE("the batch loss is the mean of per-clip multi-task losses") {
    const std::vector<Example> batch{{&h, y, 0}, {&h2, LabelVector{1, 0, 0, 0, 0, 0}, 1}};
    double sum = 0.0;
    for (const auto& ex : batch) {
      const ForwardOutput out = forward(p, *ex.features);
      sum += mtl_loss(focal_multi(out.main_probs, ex.labels, cfg.alpha, cfg.gamma),
                      weighted_ce(out.aux_probs, *ex.aux_label, cfg.aux_class_weights), cfg.w_main);
    }
    CHECK(batch_loss(p, batch, cfg) == doctest::Approx(sum / 2).epsilon(1e-14));
  }
  SUBCASE("clips without an auxiliary label contribute the weighted main loss") {
    const Example ex{&h, y, std::nullopt};
    const double main = focal_multi(forward(p, h).main_probs, y, cfg.alpha, cfg.gamma);
    CHECK(batch_loss(p, std::span<const Example>(&ex, 1), cfg) == doctest::Approx(cfg.w_main * main).epsilon(1e-14));
  }
  SUBCASE("label width mismatch") {
    const Example ex{&h, LabelVector{1, 0}, 0};
    CHECK_THROWS_AS(batch_loss(p, std::span<const Example>(&ex, 1), cfg), ShapeError);
    CHECK_THROWS_AS(forward_backward(p, std::span<const Example>(&ex, 1), cfg), ShapeError);
  }
  SUBCASE("forward_backward reports the same loss") {
    const std::vector<Example> batch{{&h, y, 0}, {&h2, y, std::nullopt}};
    CHECK(forward_backward(p, batch, cfg).loss == doctest::Approx(batch_loss(p, batch, cfg)).epsilon(1e-14));
  }
}

TEST_CASE("analytic gradients match finite differences") {
  const GradCheckSummary s = run_head_grad_checks(12, 99);
  CHECK(s.trials == 12);
  CHECK(s.max_relative_error < 1e-4);

  std::mt19937_64 rng(37);
  for (PoolingMode mode : {PoolingMode::kMean, PoolingMode::kMeanKeyValue}) {
    HeadConfig cfg = small_config(7);
    cfg.pooling = mode;
    HeadParams p = init_head(cfg);
    randomize_biases(p, rng);
    const Matrix h = random_features(rng, 5, 8);
    const std::vector<Example> batch{{&h, LabelVector{1, 0, 0, 1, 0, 0, 0}, 1}};
    CHECK(head_gradient_error(p, batch, LossConfig{}) < 1e-4);
  }
  HeadConfig raw = small_config();
  raw.query_projection = false;
  HeadParams p = init_head(raw);
  const Matrix h = random_features(rng, 5, 8);
  const std::vector<Example> batch{{&h, LabelVector{0, 0, 0, 0, 0, 1}, 0}};
  CHECK(head_gradient_error(p, batch, LossConfig{}) < 1e-4);
}

TEST_CASE("checkpoint round trip and corruption") {
  HeadConfig cfg = small_config(7);
  cfg.pooling = PoolingMode::kMean;
  cfg.dropout_rate = 0.25;
  cfg.query_projection = false;
  HeadParams p = init_head(cfg);
  std::mt19937_64 rng(41);
  randomize_biases(p, rng);
  const auto path = temp_path("head.dysh");
  save_checkpoint(p, path);
  const HeadParams q = load_checkpoint(path);
  CHECK(q.flatten() == p.flatten());
  CHECK(q.config.pooling == PoolingMode::kMean);
  CHECK(q.config.dropout_rate == 0.25);
  CHECK(q.config.seed == cfg.seed);
  CHECK_FALSE(q.config.query_projection);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  const auto truncated = temp_path("truncated.dysh");
  std::ofstream(truncated, std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  CHECK_THROWS_AS(load_checkpoint(truncated), FormatError);

  const auto bad_magic = temp_path("magic.dysh");
  std::string corrupted = bytes;
  corrupted[0] = 'X';
  std::ofstream(bad_magic, std::ios::binary) << corrupted;
  CHECK_THROWS_AS(load_checkpoint(bad_magic), FormatError);

  CHECK_THROWS_AS(load_checkpoint(temp_path("missing.dysh")), IoError);
}
