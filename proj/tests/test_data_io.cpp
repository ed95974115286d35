#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "icnlm/data_io.hpp"
#include "icnlm/normal.hpp"
#include "icnlm/rng.hpp"
#include "oracles.hpp"

namespace {

std::string temp_path(const std::string& name) {
  return ::testing::TempDir() + "icnlm_io_" + name;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << body;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(LoadDataset, ParsesFeaturesResponsesAndOptionalIds) {
  const auto fpath = temp_path("basic_features.csv");
  const auto rpath = temp_path("basic_responses.csv");
  write_text(fpath, "basis_1,basis_2\n1.5,-2.25\n0.5,1e-3\n-4,7.75\n");
  write_text(rpath, "response\n0.25\n-1.5\n3\n");
  const auto ds = icnlm::load_dataset(fpath, rpath);
  ASSERT_EQ(ds.basis.n(), 3);
  ASSERT_EQ(ds.basis.p(), 2);
  EXPECT_DOUBLE_EQ(ds.basis.values(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(ds.basis.values(0, 1), -2.25);
  EXPECT_DOUBLE_EQ(ds.basis.values(1, 1), 1e-3);
  EXPECT_DOUBLE_EQ(ds.responses[2], 3.0);
  EXPECT_TRUE(ds.ids.empty());

  const auto fpath_id = temp_path("id_features.csv");
  write_text(fpath_id, "id,basis_1\nrow-a,0.5\nrow-b,1.5\nrow-c,2.5\n");
  const auto with_ids = icnlm::load_dataset(fpath_id, rpath);
  ASSERT_EQ(with_ids.ids.size(), 3u);
  EXPECT_EQ(with_ids.ids[1], "row-b");
  EXPECT_DOUBLE_EQ(with_ids.basis.values(2, 0), 2.5);
}

TEST(LoadDataset, FeaturesOnlyLoaderLeavesResponsesEmpty) {
  const auto fpath = temp_path("query_features.csv");
  write_text(fpath, "id,basis_1,basis_2\nq1,0.5,1.5\nq2,-0.5,2.5\n");
  const auto ds = icnlm::load_features(fpath);
  ASSERT_EQ(ds.basis.n(), 2);
  ASSERT_EQ(ds.basis.p(), 2);
  EXPECT_TRUE(ds.responses.empty());
  EXPECT_EQ(ds.ids[0], "q1");
  EXPECT_DOUBLE_EQ(ds.basis.values(1, 0), -0.5);
}

TEST(LoadDataset, RowCountDisagreementRaisesShapeError) {
  const auto fpath = temp_path("shape_features.csv");
  const auto rpath = temp_path("shape_responses.csv");
  write_text(fpath, "basis_1\n1\n2\n3\n4\n5\n");
  write_text(rpath, "response\n1\n2\n3\n4\n");
  EXPECT_THROW(icnlm::load_dataset(fpath, rpath), icnlm::ShapeError);
}

TEST(LoadDataset, NanEntryRaisesNonFiniteValueNamingItsLocation) {
  const auto fpath = temp_path("nan_features.csv");
  const auto rpath = temp_path("nan_responses.csv");
  write_text(fpath, "basis_1,basis_2\n1,2\n3,NaN\n");
  write_text(rpath, "response\n1\n2\n");
  try {
    icnlm::load_dataset(fpath, rpath);
    FAIL() << "expected NonFiniteValue";
  } catch (const icnlm::NonFiniteValue& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column 2"), std::string::npos) << msg;
  }

  write_text(fpath, "basis_1\n1\n2\n");
  write_text(rpath, "response\ninf\n2\n");
  EXPECT_THROW(icnlm::load_dataset(fpath, rpath), icnlm::NonFiniteValue);
}

TEST(LoadDataset, MalformedFieldRaisesParseError) {
  const auto fpath = temp_path("bad_features.csv");
  const auto rpath = temp_path("bad_responses.csv");
  write_text(fpath, "basis_1\n1.5\ntwo\n");
  write_text(rpath, "response\n1\n2\n");
  EXPECT_THROW(icnlm::load_dataset(fpath, rpath), icnlm::ParseError);

  write_text(fpath, "basis_1\n1.5\n2.5\n");
  write_text(rpath, "response\n1\n2.5.7\n");
  EXPECT_THROW(icnlm::load_dataset(fpath, rpath), icnlm::ParseError);
}

TEST(LoadDataset, RaggedRowRaisesShapeErrorAndZeroColumnIsRejected) {
  const auto fpath = temp_path("ragged_features.csv");
  const auto rpath = temp_path("ragged_responses.csv");
  write_text(fpath, "basis_1,basis_2\n1,2\n3,4,5\n");
  write_text(rpath, "response\n1\n2\n");
  EXPECT_THROW(icnlm::load_dataset(fpath, rpath), icnlm::ShapeError);

  write_text(fpath, "basis_1,basis_2\n1,0\n3,0\n");
  EXPECT_THROW(icnlm::load_dataset(fpath, rpath), icnlm::ZeroColumn);
}

TEST(LoadDataset, RoundTripsThroughSaveDataset) {
  icnlm::Rng rng(5);
  Eigen::MatrixXd values(7, 3);
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      values(i, j) = std::exp(3.0 * rng.gaussian());
  std::vector<double> responses(7);
  for (auto& y : responses) y = rng.gaussian() * 1e-4;
  std::vector<std::string> ids;
  for (int i = 0; i < 7; ++i) ids.push_back("obs" + std::to_string(i));
  const icnlm::Dataset ds{icnlm::BasisMatrix{values}, responses, ids};

  const auto fpath = temp_path("roundtrip_features.csv");
  const auto rpath = temp_path("roundtrip_responses.csv");
  icnlm::save_dataset(fpath, rpath, ds);
  const auto back = icnlm::load_dataset(fpath, rpath);
  ASSERT_EQ(back.basis.n(), ds.basis.n());
  ASSERT_EQ(back.basis.p(), ds.basis.p());
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      EXPECT_EQ(back.basis.values(i, j), values(i, j));
  for (std::size_t i = 0; i < responses.size(); ++i)
    EXPECT_EQ(back.responses[i], responses[i]);
  EXPECT_EQ(back.ids, ids);
}

TEST(AnalyticMargin, QuantileInvertsTheCdfOnAllShapes) {
  for (auto kind : {icnlm::MarginKind::gaussian,
                    icnlm::MarginKind::skewed_mixture,
                    icnlm::MarginKind::bimodal_mixture}) {
    const auto margin = icnlm::make_margin(kind);
    double prev = -1e308;
    for (double p = 0.001; p < 0.9995; p += 0.007) {
      const double q = margin.quantile(p);
      EXPECT_NEAR(margin.cdf(q), p, 1e-12);
      EXPECT_GT(q, prev);
      prev = q;
    }
  }
}

TEST(AnalyticMargin, GaussianShapeMatchesTheClosedForm) {
  const auto margin = icnlm::make_margin(icnlm::MarginKind::gaussian);
  for (double y : {-12.0, -3.0, 0.0, 5.0, 20.0}) {
    EXPECT_NEAR(margin.cdf(y), oracle::Phi(y / 8.0), 1e-15);
    EXPECT_NEAR(margin.pdf(y), oracle::phi(y / 8.0) / 8.0, 1e-16);
  }
  EXPECT_NEAR(margin.quantile(0.975), 8.0 * icnlm::norm_quantile(0.975), 1e-8);
}

TEST(AnalyticMargin, RejectsBoundaryProbabilities) {
  const auto margin = icnlm::make_margin(icnlm::MarginKind::skewed_mixture);
  for (double p : {0.0, 1.0, -0.5, 1.5,
                   std::numeric_limits<double>::quiet_NaN()}) {
    EXPECT_THROW(margin.quantile(p), icnlm::ProbabilityOutOfRange);
  }
}

icnlm::SyntheticSpec base_spec() {
  icnlm::SyntheticSpec spec;
  spec.n = 40;
  spec.p = 3;
  spec.prior = icnlm::PriorSpec{icnlm::PriorKind::ridge, 2.5};
  spec.margin_kind = icnlm::MarginKind::skewed_mixture;
  spec.basis_kind = icnlm::BasisKind::identity;
  spec.seed = 99;
  return spec;
}

TEST(GenerateSynthetic, FixedSeedIsBitIdenticalAndSeedsSeparateRuns) {
  const auto spec = base_spec();
  const auto [da, ta] = icnlm::generate_synthetic(spec);
  const auto [db, tb] = icnlm::generate_synthetic(spec);
  EXPECT_EQ(da.basis.values, db.basis.values);
  EXPECT_EQ(da.responses, db.responses);
  EXPECT_EQ(ta.truth.beta, tb.truth.beta);
  EXPECT_EQ(ta.truth.hyper, tb.truth.hyper);
  EXPECT_EQ(ta.s.s, tb.s.s);

  auto other = spec;
  other.seed = 100;
  const auto [dc, tc] = icnlm::generate_synthetic(other);
  EXPECT_NE(da.responses, dc.responses);
}

TEST(GenerateSynthetic, RejectsInvalidSpecs) {
  auto spec = base_spec();
  spec.n = 5;
  EXPECT_THROW(icnlm::generate_synthetic(spec), icnlm::SpecMismatch);
  spec = base_spec();
  spec.p = 0;
  EXPECT_THROW(icnlm::generate_synthetic(spec), icnlm::SpecMismatch);
  spec = base_spec();
  spec.prior.nu = 0.0;
  EXPECT_THROW(icnlm::generate_synthetic(spec), icnlm::SpecMismatch);
}

TEST(GenerateSynthetic, TruthRecordIsSelfConsistent) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (auto kind : {icnlm::PriorKind::ridge, icnlm::PriorKind::horseshoe}) {
      auto spec = base_spec();
      spec.prior.kind = kind;
      spec.seed = seed;
      const auto [ds, truth] = icnlm::generate_synthetic(spec);
      ASSERT_EQ(truth.truth.beta.size(), 3);
      ASSERT_EQ(truth.truth.hyper.size(),
                spec.prior.hyper_dim(static_cast<Eigen::Index>(spec.p)));
      // stored scales equal a recomputation from the stored hyperparameters
      const auto s = icnlm::scaling_factors(
          ds.basis, spec.prior,
          icnlm::ParamVector{Eigen::VectorXd::Zero(3), truth.truth.hyper});
      for (Eigen::Index i = 0; i < s.s.size(); ++i) {
        EXPECT_DOUBLE_EQ(truth.s.s[i], s.s[i]);
        EXPECT_GE(truth.s.s[i], 0.05);
      }
      if (kind == icnlm::PriorKind::horseshoe) {
        for (Eigen::Index j = 0; j < 3; ++j)
          EXPECT_LE(std::exp(0.5 * truth.truth.hyper[j]), 10.0);
        EXPECT_LE(std::exp(truth.truth.hyper[3]), 10.0);
      }
      EXPECT_EQ(ds.ids.front(), "1");
      EXPECT_EQ(ds.ids.back(), "40");
    }
  }
}

TEST(GenerateSynthetic, PolynomialAndReluBasesHaveTheirShapes) {
  auto spec = base_spec();
  spec.basis_kind = icnlm::BasisKind::polynomial;
  const auto [poly, t1] = icnlm::generate_synthetic(spec);
  for (Eigen::Index i = 0; i < poly.basis.n(); ++i) {
    const double x = poly.basis.values(i, 0);
    EXPECT_GT(x, -2.0);
    EXPECT_LT(x, 2.0);
    EXPECT_DOUBLE_EQ(poly.basis.values(i, 1), x * x);
    EXPECT_DOUBLE_EQ(poly.basis.values(i, 2), x * x * x);
  }

  spec.basis_kind = icnlm::BasisKind::random_relu;
  spec.p = 6;
  const auto [relu, t2] = icnlm::generate_synthetic(spec);
  EXPECT_TRUE((relu.basis.values.array() >= 0.0).all());
  for (Eigen::Index j = 0; j < relu.basis.p(); ++j)
    EXPECT_FALSE((relu.basis.values.col(j).array() == 0.0).all());
}

TEST(GenerateSynthetic, PseudoResponsesAreStandardizedAcrossReplicates) {
  // z ~ N(0,1) holds marginally over the prior, so pool fresh-truth replicates
  double sum = 0.0, sum_sq = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 1; seed <= 2000; ++seed) {
    auto spec = base_spec();
    spec.n = 50;
    spec.seed = seed;
    const auto [ds, truth] = icnlm::generate_synthetic(spec);
    for (double y : ds.responses) {
      const double z = icnlm::norm_quantile(truth.margin.cdf(y));
      sum += z;
      sum_sq += z * z;
      ++count;
    }
  }
  const double mean = sum / static_cast<double>(count);
  const double sd =
      std::sqrt(sum_sq / static_cast<double>(count) - mean * mean);
  EXPECT_EQ(count, 100000u);
  EXPECT_NEAR(sd, 1.0, 0.02);
  EXPECT_NEAR(mean, 0.0, 0.02);
}

TEST(GenerateSynthetic, TrueModelPitPassesTheKsTest) {
  auto spec = base_spec();
  spec.n = 5000;
  spec.margin_kind = icnlm::MarginKind::gaussian;
  spec.basis_kind = icnlm::BasisKind::identity;
  spec.seed = 4;
  const auto [ds, truth] = icnlm::generate_synthetic(spec);
  std::vector<double> pit(spec.n);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(spec.n); ++i) {
    const double z = icnlm::norm_quantile(
        truth.margin.cdf(ds.responses[static_cast<std::size_t>(i)]));
    const double m =
        truth.s.s[i] * ds.basis.values.row(i).dot(truth.truth.beta);
    pit[static_cast<std::size_t>(i)] =
        icnlm::norm_cdf((z - m) / truth.s.s[i]);
  }
  const double ks = oracle::ks_statistic(pit, [](double u) { return u; });
  EXPECT_LE(ks, 1.36 / std::sqrt(5000.0));
}

TEST(GenerateSynthetic, UnitScaleNullModelDrawsFromTheMarginExactly) {
  // beta = 0 with unit scales collapses the construction to margin sampling
  const auto margin = icnlm::make_margin(icnlm::MarginKind::bimodal_mixture);
  icnlm::Rng rng(12);
  std::vector<double> pit(4000);
  for (auto& u : pit) {
    const double y = margin.quantile(
        std::clamp(icnlm::norm_cdf(rng.gaussian()), 1e-300,
                   std::nextafter(1.0, 0.0)));
    u = margin.cdf(y);
  }
  const double ks = oracle::ks_statistic(pit, [](double u) { return u; });
  EXPECT_LE(ks, 1.36 / std::sqrt(4000.0));
}

icnlm::FitMetadata demo_meta() {
  return icnlm::FitMetadata{
      icnlm::PriorSpec{icnlm::PriorKind::horseshoe, 3.25}, 7, 123456789u};
}

TEST(Persistence, MarginalRoundTripIsBitExact) {
  icnlm::Rng rng(3);
  std::vector<double> sample(200);
  for (auto& v : sample) v = 2.0 + 1.7 * rng.gaussian();
  const auto margin = icnlm::fit_kde(sample);
  const auto path = temp_path("margin.icnlm");
  icnlm::save_fit(path, margin, demo_meta());
  const auto back = icnlm::load_fit(path);
  ASSERT_EQ(back.kind, "marginal");
  ASSERT_TRUE(back.margin.has_value());
  ASSERT_EQ(back.margin->sample().size(), margin.sample().size());
  for (std::size_t i = 0; i < sample.size(); ++i)
    EXPECT_EQ(back.margin->sample()[i], margin.sample()[i]);
  EXPECT_EQ(back.margin->bandwidth(), margin.bandwidth());
  EXPECT_EQ(back.margin->support_clamp(), margin.support_clamp());
  for (double y : {-1.0, 2.0, 4.5})
    EXPECT_EQ(back.margin->cdf(y), margin.cdf(y));
  EXPECT_EQ(back.meta.p, 7u);
  EXPECT_EQ(back.meta.seed, 123456789u);
  EXPECT_EQ(back.meta.prior.kind, icnlm::PriorKind::horseshoe);
  EXPECT_EQ(back.meta.prior.nu, 3.25);
}

TEST(Persistence, DrawsRoundTripIsBitExactIncludingAwkwardValues) {
  icnlm::Rng rng(9);
  icnlm::PosteriorDraws d;
  d.draws.resize(11, 5);
  for (Eigen::Index i = 0; i < d.draws.rows(); ++i)
    for (Eigen::Index j = 0; j < d.draws.cols(); ++j)
      d.draws(i, j) = std::exp(40.0 * rng.gaussian());
  d.draws(0, 0) = 0.0;
  d.draws(1, 1) = -0.0;
  d.draws(2, 2) = 5e-324;   // smallest subnormal
  d.draws(3, 3) = -1.7976931348623157e308;
  d.accept_rate = 0.8125;
  d.ess = Eigen::VectorXd::LinSpaced(5, 10.5, 99.25);
  const auto path = temp_path("draws.icnlm");
  icnlm::save_fit(path, d, demo_meta());
  const auto back = icnlm::load_fit(path);
  ASSERT_EQ(back.kind, "draws");
  ASSERT_TRUE(back.draws.has_value());
  ASSERT_EQ(back.draws->draws.rows(), 11);
  ASSERT_EQ(back.draws->draws.cols(), 5);
  for (Eigen::Index i = 0; i < d.draws.rows(); ++i)
    for (Eigen::Index j = 0; j < d.draws.cols(); ++j)
      EXPECT_EQ(back.draws->draws(i, j), d.draws(i, j)) << i << "," << j;
  EXPECT_TRUE(std::signbit(back.draws->draws(1, 1)));
  EXPECT_EQ(back.draws->accept_rate, d.accept_rate);
  EXPECT_EQ(back.draws->ess, d.ess);
}

TEST(Persistence, VariationalFitRoundTripIsBitExact) {
  icnlm::Rng rng(21);
  icnlm::VariationalFit f;
  const Eigen::Index p = 6, k = 2;
  f.params.mu = Eigen::VectorXd::NullaryExpr(p, [&] { return rng.gaussian(); });
  f.params.factor = Eigen::MatrixXd::Zero(p, k);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = j; i < p; ++i) f.params.factor(i, j) = rng.gaussian();
  f.params.diag =
      Eigen::VectorXd::NullaryExpr(p, [&] { return 0.1 * rng.gaussian(); });
  f.elbo_trace = {-100.25, -50.5, -49.75, -49.875};
  f.iterations_run = 4;
  f.converged = true;
  const auto path = temp_path("vifit.icnlm");
  icnlm::save_fit(path, f, demo_meta());
  const auto back = icnlm::load_fit(path);
  ASSERT_EQ(back.kind, "vifit");
  ASSERT_TRUE(back.vifit.has_value());
  EXPECT_EQ(back.vifit->params.mu, f.params.mu);
  EXPECT_EQ(back.vifit->params.factor, f.params.factor);
  EXPECT_EQ(back.vifit->params.diag, f.params.diag);
  EXPECT_EQ(back.vifit->elbo_trace, f.elbo_trace);
  EXPECT_EQ(back.vifit->iterations_run, 4u);
  EXPECT_TRUE(back.vifit->converged);
}

TEST(Persistence, TruthRoundTripIsBitExact) {
  auto spec = base_spec();
  spec.prior.kind = icnlm::PriorKind::horseshoe;
  const auto [ds, truth] = icnlm::generate_synthetic(spec);
  const auto path = temp_path("truth.icnlm");
  icnlm::save_fit(path, truth,
                  icnlm::FitMetadata{spec.prior, spec.p, spec.seed});
  const auto back = icnlm::load_fit(path);
  ASSERT_EQ(back.kind, "truth");
  ASSERT_TRUE(back.truth.has_value());
  EXPECT_EQ(back.truth->truth.beta, truth.truth.beta);
  EXPECT_EQ(back.truth->truth.hyper, truth.truth.hyper);
  EXPECT_EQ(back.truth->s.s, truth.s.s);
  EXPECT_EQ(back.truth->margin.weights, truth.margin.weights);
  EXPECT_EQ(back.truth->margin.means, truth.margin.means);
  EXPECT_EQ(back.truth->margin.sds, truth.margin.sds);
}

TEST(Persistence, RandomizedDrawArtifactsAlwaysRoundTrip) {
  icnlm::Rng rng(33);
  for (int rep = 0; rep < 20; ++rep) {
    icnlm::PosteriorDraws d;
    const auto rows = 1 + static_cast<Eigen::Index>(rng.uniform() * 8);
    const auto cols = 1 + static_cast<Eigen::Index>(rng.uniform() * 6);
    d.draws = Eigen::MatrixXd::NullaryExpr(
        rows, cols, [&] { return std::ldexp(rng.gaussian(), static_cast<int>(rng.uniform() * 600) - 300); });
    d.accept_rate = rng.uniform();
    d.ess = Eigen::VectorXd::NullaryExpr(
        cols, [&] { return 1.0 + 500.0 * rng.uniform(); });
    const auto path = temp_path("random_draws.icnlm");
    icnlm::save_fit(path, d, demo_meta());
    const auto back = icnlm::load_fit(path);
    ASSERT_TRUE(back.draws.has_value());
    EXPECT_EQ(back.draws->draws, d.draws);
    EXPECT_EQ(back.draws->accept_rate, d.accept_rate);
    EXPECT_EQ(back.draws->ess, d.ess);
  }
}

TEST(Persistence, TruncationAndCorruptionRaiseChecksumMismatch) {
  icnlm::PosteriorDraws d;
  d.draws = Eigen::MatrixXd::Constant(4, 3, 1.25);
  d.accept_rate = 0.5;
  d.ess = Eigen::VectorXd::Constant(3, 40.0);
  const auto path = temp_path("damaged.icnlm");
  icnlm::save_fit(path, d, demo_meta());
  const std::string body = read_text(path);

  write_text(path, body.substr(0, body.size() - 10));
  EXPECT_THROW(icnlm::load_fit(path), icnlm::ChecksumMismatch);

  std::string corrupted = body;
  corrupted[body.size() / 2] = 'X';
  write_text(path, corrupted);
  EXPECT_THROW(icnlm::load_fit(path), icnlm::ChecksumMismatch);

  write_text(path, "no container here\n");
  EXPECT_THROW(icnlm::load_fit(path), icnlm::ChecksumMismatch);
}

std::string reseal(std::string payload) {
  // recompute the trailing checksum so only the targeted defect remains
  return payload + "checksum " + icnlm::detail::hex16(icnlm::detail::fnv1a64(payload)) + "\n";
}

TEST(Persistence, WrongVersionAndUnknownKindAreRejected) {
  icnlm::PosteriorDraws d;
  d.draws = Eigen::MatrixXd::Constant(2, 2, 0.5);
  d.accept_rate = 0.25;
  d.ess = Eigen::VectorXd::Constant(2, 4.0);
  const auto path = temp_path("versioned.icnlm");
  icnlm::save_fit(path, d, demo_meta());
  const std::string body = read_text(path);
  const std::size_t cut = body.rfind("checksum ");
  std::string payload = body.substr(0, cut);

  std::string v2 = payload;
  v2.replace(v2.find("icnlm 1"), 7, "icnlm 2");
  write_text(path, reseal(v2));
  EXPECT_THROW(icnlm::load_fit(path), icnlm::VersionMismatch);

  std::string blob = payload;
  blob.replace(blob.find("draws"), 5, "blobs");
  write_text(path, reseal(blob));
  EXPECT_THROW(icnlm::load_fit(path), icnlm::ParseError);
}

TEST(Tables, PredictionTableWritesRequestedColumns) {
  std::vector<icnlm::PredictionRow> rows(2);
  rows[0] = {"1", 0.5, 0.25, -1.0, 0.5, 2.0, -0.75, 1.75};
  rows[1] = {"2", 1.5, 0.5, -0.5, 1.5, 3.5, -0.25, 3.25};
  const auto plain = temp_path("pred_plain.tsv");
  icnlm::save_predictions(plain, rows, std::nullopt);
  const auto with_bounds = temp_path("pred_bounds.tsv");
  icnlm::save_predictions(with_bounds, rows, 0.1);

  const auto lines_plain = icnlm::detail::split_lines(read_text(plain));
  ASSERT_EQ(lines_plain.size(), 3u);
  EXPECT_EQ(lines_plain[0], "id\tmean\tvariance\tq05\tq50\tq95");
  EXPECT_EQ(lines_plain[1], "1\t0.5\t0.25\t-1\t0.5\t2");

  const auto lines_bounds = icnlm::detail::split_lines(read_text(with_bounds));
  EXPECT_EQ(lines_bounds[0], "id\tmean\tvariance\tq05\tq50\tq95\tlower\tupper");
  EXPECT_EQ(lines_bounds[2], "2\t1.5\t0.5\t-0.5\t1.5\t3.5\t-0.25\t3.25");
}

TEST(Tables, ReportWriterEmitsAllFiveArtifacts) {
  const std::vector<double> y{0.0, 1.0, 2.0};
  icnlm::CalibrationReport report;
  std::vector<icnlm::CdfEvaluator> cdfs(
      y.size(), [](double g) { return oracle::Phi(g); });
  report.marginal_curve =
      icnlm::marginal_calibration(cdfs, y, icnlm::calibration_y_grid(y, 11));
  report.pit_curve =
      icnlm::probabilistic_calibration({0.1, 0.5, 0.9}, {0.25, 0.75});
  report.coverage_curve = icnlm::coverage(
      {{0.9, {{-1.0, 1.0}, {0.0, 2.0}, {1.0, 3.0}}}}, y);
  report.metrics = icnlm::point_metrics({0.0, 1.0, 5.0}, y);
  report.error_variance_curve =
      icnlm::error_vs_variance({1.0, 4.0}, {0.5, 0.7}, {0.6, 1.0});

  const auto prefix = temp_path("report_");
  icnlm::save_report(prefix, report);

  const auto metrics = icnlm::detail::split_lines(read_text(prefix + "metrics.tsv"));
  ASSERT_EQ(metrics.size(), 5u);
  EXPECT_EQ(metrics[0], "metric\tvalue");
  EXPECT_EQ(metrics[1], "mae\t1");
  EXPECT_EQ(metrics[2], "mse\t3");

  EXPECT_EQ(icnlm::detail::split_lines(
                read_text(prefix + "marginal_calibration.tsv")).size(), 12u);
  const auto pit = icnlm::detail::split_lines(read_text(prefix + "pit_calibration.tsv"));
  ASSERT_EQ(pit.size(), 3u);
  EXPECT_EQ(pit[0], "level\tobserved\tdeviation");
  const auto cov = icnlm::detail::split_lines(read_text(prefix + "coverage.tsv"));
  ASSERT_EQ(cov.size(), 2u);
  const auto ev = icnlm::detail::split_lines(read_text(prefix + "error_vs_variance.tsv"));
  ASSERT_EQ(ev.size(), 3u);
  EXPECT_EQ(ev[1], "0.6\t1\t0.5");
}

}  // namespace
