#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "deeplda/losses.hpp"
#include "deeplda/gradcheck.hpp"
#include "deeplda/train.hpp"
#include "deeplda/rng.hpp"

using namespace deeplda;

namespace {

LdaParams uniform_head(int C, int d) {
  LdaParams p;
  p.prior_logits.assign(C, 0.0);
  p.means.assign(C, Vec(d, 0.0));
  p.cov = CovarianceParam::full_identity(d);
  return p;
}

LdaParams random_head(int C, int d, Rng& rng,
                      CovarianceParam::Variant v = CovarianceParam::Variant::FullCholesky) {
  LdaParams p;
  p.prior_logits.resize(C);
  for (double& x : p.prior_logits) x = 0.5 * standard_normal(rng);
  p.means.assign(C, Vec(d));
  for (auto& m : p.means)
    for (double& x : m) x = 1.5 * standard_normal(rng);
  size_t n = v == CovarianceParam::Variant::Spherical ? 1
           : v == CovarianceParam::Variant::Diagonal ? size_t(d)
                                                     : size_t(d) * (d + 1) / 2;
  Vec raw(n);
  for (double& x : raw) x = 0.3 * standard_normal(rng);
  p.cov = CovarianceParam::from_raw(v, d, std::move(raw));
  return p;
}

}  // namespace

TEST_CASE("nll value on pinned configurations") {
  // single class, z at the mean, identity covariance in 2-D: the joint density
  // is the standard normal peak, so the loss is log(2 pi)
  LdaParams one = uniform_head(1, 2);
  SampleResult r1 = nll(one, Vec{0.0, 0.0}, 0);
  REQUIRE(std::abs(r1.value - kLog2Pi) < 1e-12);

  // three coincident classes with uniform priors add log 3
  LdaParams three = uniform_head(3, 2);
  SampleResult r3 = nll(three, Vec{0.0, 0.0}, 1);
  REQUIRE(std::abs(r3.value - (std::log(3.0) + kLog2Pi)) < 1e-12);

  // moving z off the mean adds the half squared distance
  SampleResult off = nll(one, Vec{3.0, 4.0}, 0);
  REQUIRE(std::abs(off.value - (kLog2Pi + 12.5)) < 1e-12);
}

TEST_CASE("cross entropy value on pinned configurations") {
  // coincident means: posterior is uniform, loss is log C
  LdaParams three = uniform_head(3, 2);
  SampleResult r = cross_entropy(three, Vec{0.5, -0.2}, 0);
  REQUIRE(std::abs(r.value - std::log(3.0)) < 1e-12);

  // far separated means with z at the true mean: loss tends to zero
  LdaParams p = uniform_head(2, 2);
  p.means[1] = Vec{40.0, 0.0};
  SampleResult conf = cross_entropy(p, Vec{0.0, 0.0}, 0);
  REQUIRE(conf.value >= 0.0);
  REQUIRE(conf.value < 1e-12);
}

TEST_CASE("cross entropy is invariant to shifting all prior logits") {
  Rng rng = make_rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    LdaParams p = random_head(3, 2, rng);
    LdaParams q = p;
    for (double& x : q.prior_logits) x += 4.2;
    Vec z = {standard_normal(rng), standard_normal(rng)};
    int y = int(uniform_index(rng, 3));
    REQUIRE(std::abs(cross_entropy(p, z, y).value - cross_entropy(q, z, y).value) < 1e-12);
  }
}

TEST_CASE("ce gradient wrt discriminants matches two independent routes") {
  Rng rng = make_rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    Vec delta(4);
    for (double& x : delta) x = 2.0 * standard_normal(rng);
    int y = int(uniform_index(rng, 4));

    Vec g = ce_grad_wrt_discriminants(delta, y);

    // route 1: exponentiate the log softmax
    Vec ls = log_softmax(delta);
    for (int c = 0; c < 4; ++c) {
      double expected = std::exp(ls[c]) - (c == y ? 1.0 : 0.0);
      REQUIRE(std::abs(g[c] - expected) < 1e-12);
    }

    // route 2: central differences on the scalar map delta -> ce value
    auto f = [&](const Vec& d) { return -d[y] + log_sum_exp(d); };
    Vec fd = finite_difference_gradient(f, delta);
    for (int c = 0; c < 4; ++c) REQUIRE(std::abs(g[c] - fd[c]) < 1e-8);
  }
}

TEST_CASE("dnll with lambda zero is exactly the unanchored score") {
  Rng rng = make_rng(43);
  for (int trial = 0; trial < 30; ++trial) {
    LdaParams p = random_head(3, 2, rng);
    Vec z = {standard_normal(rng), standard_normal(rng)};
    int y = int(uniform_index(rng, 3));
    SampleResult r = dnll(p, z, y, 0.0);
    Vec d = discriminants(p, z);
    REQUIRE(r.value == -d[y]);
  }
}

TEST_CASE("dnll value and discriminant gradient on the all-zero configuration") {
  // one dimensional, three coincident classes, sigma = 1/3, z at the mean:
  // delta_c = log(1/3) - log(1/3) = 0 for every class
  LdaParams p;
  p.prior_logits.assign(3, 0.0);
  p.means.assign(3, Vec{0.0});
  p.cov = CovarianceParam::spherical(1, 1.0 / 3.0);
  Vec d = discriminants(p, Vec{0.0});
  for (double v : d) REQUIRE(std::abs(v) < 1e-12);

  SampleResult r = dnll(p, Vec{0.0}, 0, 1.0);
  REQUIRE(std::abs(r.value - 3.0) < 1e-12);

  Vec g = dnll_grad_wrt_discriminants(d, 0, 1.0);
  REQUIRE(std::abs(g[0] - 0.0) < 1e-12);
  REQUIRE(std::abs(g[1] - 1.0) < 1e-12);
  REQUIRE(std::abs(g[2] - 1.0) < 1e-12);
}

TEST_CASE("dnll discriminant gradient matches central differences") {
  Rng rng = make_rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    Vec delta(3);
    for (double& x : delta) x = 2.0 * standard_normal(rng);
    int y = int(uniform_index(rng, 3));
    double lambda = std::exp(std::log(1e-3) * uniform_unit(rng));

    Vec g = dnll_grad_wrt_discriminants(delta, y, lambda);
    auto f = [&](const Vec& d) {
      double s = 0.0;
      for (double v : d) s += std::exp(v);
      return -d[y] + lambda * s;
    };
    Vec fd = finite_difference_gradient(f, delta);
    for (int c = 0; c < 3; ++c) REQUIRE(std::abs(g[c] - fd[c]) < 1e-6);
  }
}

TEST_CASE("penalized and plain losses differ by the density term") {
  // dnll - nll = lambda * (2 pi)^(d/2) * p(z) - (d/2) log(2 pi)
  Rng rng = make_rng(45);
  for (int trial = 0; trial < 50; ++trial) {
    LdaParams p = random_head(3, 2, rng);
    Vec z = {2.0 * standard_normal(rng), 2.0 * standard_normal(rng)};
    int y = int(uniform_index(rng, 3));
    double lambda = 0.05 + uniform_unit(rng);

    double lhs = dnll(p, z, y, lambda).value - nll(p, z, y).value -
                 lambda * std::exp(kLog2Pi) * mixture_density(p, z);
    REQUIRE(std::abs(lhs - (-kLog2Pi)) < 1e-10);
  }
}

TEST_CASE("full parameter gradients match finite differences for every loss") {
  Rng rng = make_rng(46);
  for (int trial = 0; trial < 12; ++trial) {
    auto variant = trial % 3 == 0 ? CovarianceParam::Variant::Spherical
                 : trial % 3 == 1 ? CovarianceParam::Variant::Diagonal
                                  : CovarianceParam::Variant::FullCholesky;
    LdaParams p = random_head(3, 2, rng, variant);
    Vec z = {1.5 * standard_normal(rng), 1.5 * standard_normal(rng)};
    int y = int(uniform_index(rng, 3));
    ObjectiveKind kind = trial % 3 == 0 ? ObjectiveKind::nll()
                       : trial % 3 == 1 ? ObjectiveKind::cross_entropy()
                                        : ObjectiveKind::dnll(0.1);

    SampleResult r = sample_loss(p, z, y, kind);

    Vec flat;
    append_head(flat, p);
    flat.insert(flat.end(), z.begin(), z.end());
    auto f = [&](const Vec& x) {
      LdaParams q = p;
      size_t pos = read_head(x, 0, q);
      Vec zz(x.begin() + pos, x.end());
      return sample_loss(q, zz, y, kind).value;
    };
    Vec fd = finite_difference_gradient(f, flat);

    Vec analytic;
    append_head_grad(analytic, r.grad_params);
    analytic.insert(analytic.end(), r.grad_z.begin(), r.grad_z.end());

    REQUIRE(analytic.size() == fd.size());
    for (size_t i = 0; i < fd.size(); ++i) {
      double denom = std::max(1.0, std::abs(analytic[i]));
      REQUIRE(std::abs(analytic[i] - fd[i]) / denom < 1e-5);
    }
  }
}

TEST_CASE("batch of one equals the single sample result") {
  Rng rng = make_rng(47);
  LdaParams p = random_head(3, 2, rng);
  Vec z = {0.4, -1.1};
  SampleResult single = cross_entropy(p, z, 2);
  LossBatchResult batch = batch_loss(p, {z}, {2}, ObjectiveKind::cross_entropy());
  REQUIRE(batch.value == single.value);
  REQUIRE(batch.grad_embeddings.size() == 1);
  for (size_t i = 0; i < z.size(); ++i)
    REQUIRE(batch.grad_embeddings[0][i] == single.grad_z[i]);
  for (size_t c = 0; c < 3; ++c)
    for (size_t i = 0; i < 2; ++i)
      REQUIRE(batch.grad_params.means[c][i] == single.grad_params.means[c][i]);
}

TEST_CASE("duplicating the batch leaves the means unchanged") {
  Rng rng = make_rng(48);
  LdaParams p = random_head(3, 2, rng);
  std::vector<Vec> zs;
  std::vector<int> ys;
  for (int i = 0; i < 8; ++i) {
    zs.push_back(Vec{standard_normal(rng), standard_normal(rng)});
    ys.push_back(int(uniform_index(rng, 3)));
  }
  LossBatchResult once = batch_loss(p, zs, ys, ObjectiveKind::nll());

  std::vector<Vec> zs2 = zs;
  std::vector<int> ys2 = ys;
  zs2.insert(zs2.end(), zs.begin(), zs.end());
  ys2.insert(ys2.end(), ys.begin(), ys.end());
  LossBatchResult twice = batch_loss(p, zs2, ys2, ObjectiveKind::nll());

  REQUIRE(std::abs(once.value - twice.value) < 1e-12);
  for (size_t i = 0; i < once.grad_params.prior_logits.size(); ++i)
    REQUIRE(std::abs(once.grad_params.prior_logits[i] - twice.grad_params.prior_logits[i]) < 1e-12);
  for (size_t i = 0; i < once.grad_params.cov_raw.size(); ++i)
    REQUIRE(std::abs(once.grad_params.cov_raw[i] - twice.grad_params.cov_raw[i]) < 1e-12);
}

TEST_CASE("batch gradient spot check against finite differences") {
  Rng rng = make_rng(49);
  LdaParams p = random_head(3, 2, rng);
  std::vector<Vec> zs;
  std::vector<int> ys;
  for (int i = 0; i < 64; ++i) {
    zs.push_back(Vec{1.5 * standard_normal(rng), 1.5 * standard_normal(rng)});
    ys.push_back(int(uniform_index(rng, 3)));
  }
  ObjectiveKind kind = ObjectiveKind::dnll(0.05);
  LossBatchResult batch = batch_loss(p, zs, ys, kind);

  Vec flat;
  append_head(flat, p);
  Vec analytic;
  append_head_grad(analytic, batch.grad_params);
  REQUIRE(analytic.size() == flat.size());

  auto value_at = [&](const Vec& x) {
    LdaParams q = p;
    read_head(x, 0, q);
    return batch_loss(q, zs, ys, kind).value;
  };

  // probe ten coordinates spread across the flat layout
  for (size_t k = 0; k < 10; ++k) {
    size_t i = k * flat.size() / 10;
    Vec hi = flat, lo = flat;
    const double h = 1e-5;
    hi[i] += h;
    lo[i] -= h;
    double fd = (value_at(hi) - value_at(lo)) / (2.0 * h);
    double denom = std::max(1.0, std::abs(analytic[i]));
    REQUIRE(std::abs(analytic[i] - fd) / denom < 1e-5);
  }

  // the per-sample embedding gradients carry the 1/n batch scaling
  SampleResult first = sample_loss(p, zs[0], ys[0], kind);
  for (size_t i = 0; i < 2; ++i)
    REQUIRE(std::abs(batch.grad_embeddings[0][i] - first.grad_z[i] / 64.0) < 1e-15);
}

TEST_CASE("gradients stay finite on extreme but representable inputs") {
  LdaParams p = uniform_head(3, 2);
  p.means[1] = Vec{50.0, 0.0};
  p.means[2] = Vec{0.0, 50.0};
  for (int y = 0; y < 3; ++y) {
    for (auto kind : {ObjectiveKind::nll(), ObjectiveKind::cross_entropy(),
                      ObjectiveKind::dnll(1.0)}) {
      SampleResult r = sample_loss(p, Vec{25.0, 25.0}, y, kind);
      REQUIRE(std::isfinite(r.value));
      REQUIRE(all_finite(r.grad_z));
      REQUIRE(r.grad_params.all_entries_finite());
    }
  }
}

TEST_CASE("the bundled gradient check suites pass and are deterministic") {
  GradCheckReport rep = run_grad_check(40, 12345);
  REQUIRE(rep.suites.size() == 3);
  for (const GradCheckSuite& s : rep.suites) {
    INFO(s.name << " max rel err " << s.max_rel_err);
    REQUIRE(s.pass());
  }
  // the discriminant-gradient identity is exact to near machine precision
  REQUIRE(rep.suites[2].tolerance == 1e-10);
  REQUIRE(rep.suites[2].trials >= 1000);

  GradCheckReport rep2 = run_grad_check(40, 12345);
  for (size_t i = 0; i < rep.suites.size(); ++i)
    REQUIRE(rep2.suites[i].max_rel_err == rep.suites[i].max_rel_err);
}

TEST_CASE("loss error handling") {
  LdaParams p = uniform_head(2, 2);
  REQUIRE_THROWS_AS(nll(p, Vec{0.0, 0.0}, 2), InvalidLabel);
  REQUIRE_THROWS_AS(nll(p, Vec{0.0, 0.0}, -1), InvalidLabel);
  REQUIRE_THROWS_AS(dnll(p, Vec{0.0, 0.0}, 0, -0.5), NegativeLambda);
  REQUIRE_THROWS_AS(ObjectiveKind::dnll(-1.0), NegativeLambda);
  REQUIRE_THROWS_AS(batch_loss(p, {}, {}, ObjectiveKind::nll()), EmptyBatch);
  REQUIRE_THROWS_AS(batch_loss(p, {Vec{0.0, 0.0}}, {0, 1}, ObjectiveKind::nll()),
                    DimensionMismatch);

  // a collapsed covariance overflows exp(delta) inside the penalty
  LdaParams tiny = uniform_head(2, 1);
  tiny.means = {{0.0}, {1.0}};
  tiny.cov = CovarianceParam::from_raw(CovarianceParam::Variant::Spherical, 1, Vec{-800.0});
  REQUIRE_THROWS_AS(batch_loss(tiny, {Vec{0.0}}, {0}, ObjectiveKind::dnll(1.0)),
                    NonFiniteLoss);
}
