#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "icnlm/copula_model.hpp"
#include "icnlm/diagnostics.hpp"
#include "icnlm/errors.hpp"
#include "icnlm/hmc.hpp"
#include "icnlm/marginal.hpp"
#include "icnlm/normal.hpp"
#include "icnlm/rng.hpp"
#include "icnlm/vi.hpp"

namespace icnlm {

//! In-memory training or query set: basis features, responses, optional ids.
//! responses may be empty for pure query sets; when ids is non-empty its
//! length equals the number of basis rows.
struct Dataset {
  BasisMatrix basis;
  std::vector<double> responses;
  std::vector<std::string> ids;
};

enum class MarginKind { gaussian, skewed_mixture, bimodal_mixture };
enum class BasisKind { random_relu, polynomial, identity };

//! Gaussian-mixture margin with exact pdf/cdf and a numeric quantile, used as
//! the analytic ground truth of the synthetic generator.
struct AnalyticMargin {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> sds;

  double pdf(double y) const {
    double acc = 0.0;
    for (std::size_t j = 0; j < weights.size(); ++j)
      acc += weights[j] * norm_pdf((y - means[j]) / sds[j]) / sds[j];
    return acc;
  }

  double cdf(double y) const {
    double acc = 0.0;
    for (std::size_t j = 0; j < weights.size(); ++j)
      acc += weights[j] * norm_cdf((y - means[j]) / sds[j]);
    return acc;
  }

  //! Inverse CDF by bracketed safeguarded Newton; p must lie strictly in (0,1).
  double quantile(double p) const {
    if (!(p > 0.0) || !(p < 1.0))
      throw ProbabilityOutOfRange("quantile probability must lie strictly in (0,1)");
    double sd_max = 0.0, lo = means.front(), hi = means.front();
    for (std::size_t j = 0; j < weights.size(); ++j) {
      sd_max = std::max(sd_max, sds[j]);
      lo = std::min(lo, means[j]);
      hi = std::max(hi, means[j]);
    }
    const double span = 8.0 * sd_max;
    lo -= span;
    hi += span;
    for (int i = 0; i < 80 && cdf(lo) > p; ++i) lo -= span;
    for (int i = 0; i < 80 && cdf(hi) < p; ++i) hi += span;
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      const double f = cdf(x);
      if (std::abs(f - p) <= 1e-14) return x;
      if (f < p)
        lo = x;
      else
        hi = x;
      if (hi - lo <= 1e-14 * std::max(1.0, std::abs(lo) + std::abs(hi))) break;
      const double d = pdf(x);
      const double next = d > 0.0 ? x - (f - p) / d : 0.5 * (lo + hi);
      x = (next > lo && next < hi) ? next : 0.5 * (lo + hi);
    }
    return 0.5 * (lo + hi);
  }
};

//! Fixed margin shapes offered by the generator (response units, e.g. degrees).
inline AnalyticMargin make_margin(MarginKind kind) {
  switch (kind) {
    case MarginKind::gaussian:
      return AnalyticMargin{{1.0}, {0.0}, {8.0}};
    case MarginKind::skewed_mixture:
      return AnalyticMargin{{0.7, 0.3}, {-2.0, 6.0}, {1.5, 4.0}};
    case MarginKind::bimodal_mixture:
    default:
      return AnalyticMargin{{0.5, 0.5}, {-6.0, 6.0}, {2.0, 2.0}};
  }
}

//! Recipe for a well-specified synthetic dataset.
struct SyntheticSpec {
  std::size_t n = 0;
  std::size_t p = 0;
  PriorSpec prior{};
  MarginKind margin_kind = MarginKind::gaussian;
  BasisKind basis_kind = BasisKind::identity;
  std::uint64_t seed = 1;
};

//! Generating parameters retained alongside a synthetic dataset: true weights
//! and hyperparameters (model parameterization), per-row scales, and the
//! analytic margin the responses were pushed through.
struct TruthRecord {
  ParamVector truth;
  ScalingVector s;
  AnalyticMargin margin;
};

//! Metadata header persisted with every artifact.
struct FitMetadata {
  PriorSpec prior{};
  std::size_t p = 0;
  std::uint64_t seed = 0;
};

//! One persisted artifact; exactly one of the optionals is populated,
//! identified by kind ("marginal", "draws", "vifit", "truth").
struct LoadedFit {
  FitMetadata meta;
  std::string kind;
  std::optional<MarginalEstimate> margin;
  std::optional<PosteriorDraws> draws;
  std::optional<VariationalFit> vifit;
  std::optional<TruthRecord> truth;
};

namespace detail {

// shortest decimal representation that parses back to the same double
inline std::string dec_str(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// lossless hexadecimal float representation
inline std::string hex_str(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
  return std::string(buf, res.ptr);
}

inline std::string u64_str(std::uint64_t v) {
  char buf[24];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view tok, double& out,
                         std::chars_format fmt = std::chars_format::general) {
  const char* end = tok.data() + tok.size();
  const auto res = std::from_chars(tok.data(), end, out, fmt);
  return res.ec == std::errc() && res.ptr == end;
}

inline bool parse_u64(std::string_view tok, std::uint64_t& out) {
  const char* end = tok.data() + tok.size();
  const auto res = std::from_chars(tok.data(), end, out);
  return res.ec == std::errc() && res.ptr == end;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex16(std::uint64_t v) {
  char buf[16];
  for (int i = 15; i >= 0; --i) {
    buf[i] = "0123456789abcdef"[v & 0xFULL];
    v >>= 4;
  }
  return std::string(buf, 16);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline void write_file(const std::string& path, std::string_view body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  out.flush();
  if (!out) throw IoError("write failure: " + path);
}

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t nl = text.find('\n', start);
    std::string_view line = nl == std::string_view::npos
                                ? text.substr(start)
                                : text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return lines;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

// CSV cell: ParseError on malformed numerics, NonFiniteValue on nan/inf
inline double parse_cell(const std::string& tok, const std::string& where,
                         std::size_t line_no, std::size_t col_no) {
  const std::string loc =
      where + " line " + u64_str(line_no) + " column " + u64_str(col_no);
  double v = 0.0;
  if (!parse_double(tok, v))
    throw ParseError(loc + ": malformed numeric field '" + tok + "'");
  if (!std::isfinite(v))
    throw NonFiniteValue(loc + ": non-finite value '" + tok + "'");
  return v;
}

}  // namespace detail

//! Parses a feature CSV alone (header row; optional leading "id" column; one
//! observation per row) into a Dataset with empty responses, for query sets.
inline Dataset load_features(const std::string& features_path) {
  const auto flines = detail::split_lines(detail::read_file(features_path));
  if (flines.empty()) throw ParseError(features_path + ": empty file");
  const auto header = detail::split_fields(flines[0], ',');
  const bool has_id = !header.empty() && header[0] == "id";
  const std::size_t p = header.size() - (has_id ? 1 : 0);
  if (p == 0) throw ShapeError(features_path + ": no feature columns in header");

  std::vector<std::vector<double>> rows;
  std::vector<std::string> ids;
  for (std::size_t li = 1; li < flines.size(); ++li) {
    if (flines[li].empty()) continue;
    const auto fields = detail::split_fields(flines[li], ',');
    if (fields.size() != header.size())
      throw ShapeError(features_path + " line " + detail::u64_str(li + 1) +
                       ": expected " + detail::u64_str(header.size()) +
                       " fields, got " + detail::u64_str(fields.size()));
    std::vector<double> row(p);
    for (std::size_t j = 0; j < p; ++j)
      row[j] = detail::parse_cell(fields[j + (has_id ? 1 : 0)], features_path,
                                  li + 1, j + (has_id ? 1 : 0) + 1);
    rows.push_back(std::move(row));
    if (has_id) ids.push_back(fields[0]);
  }
  if (rows.empty()) throw ShapeError(features_path + ": no data rows");

  Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size()),
                         static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < p; ++j)
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
  return Dataset{make_basis(std::move(values)), {}, std::move(ids)};
}

//! Parses a feature CSV and a response file (header row; one value per line)
//! into a validated Dataset.
inline Dataset load_dataset(const std::string& features_path,
                            const std::string& responses_path) {
  Dataset ds = load_features(features_path);
  const auto rlines = detail::split_lines(detail::read_file(responses_path));
  if (rlines.empty()) throw ParseError(responses_path + ": empty file");
  std::vector<double> responses;
  for (std::size_t li = 1; li < rlines.size(); ++li) {
    if (rlines[li].empty()) continue;
    responses.push_back(
        detail::parse_cell(detail::trim(rlines[li]), responses_path, li + 1, 1));
  }
  if (responses.size() != static_cast<std::size_t>(ds.basis.n()))
    throw ShapeError("feature rows (" + detail::u64_str(
                         static_cast<std::uint64_t>(ds.basis.n())) +
                     ") disagree with response rows (" +
                     detail::u64_str(responses.size()) + ")");
  ds.responses = std::move(responses);
  return ds;
}

//! Writes the feature CSV and response file read back by load_dataset.
inline void save_dataset(const std::string& features_path,
                         const std::string& responses_path, const Dataset& ds) {
  const auto& M = ds.basis.values;
  const bool has_id = !ds.ids.empty();
  if (has_id && ds.ids.size() != static_cast<std::size_t>(M.rows()))
    throw LengthMismatch("id count disagrees with basis rows");
  if (ds.responses.size() != static_cast<std::size_t>(M.rows()))
    throw LengthMismatch("response count disagrees with basis rows");

  std::string f;
  if (has_id) f += "id,";
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    if (j > 0) f += ',';
    f += "basis_" + detail::u64_str(static_cast<std::uint64_t>(j + 1));
  }
  f += '\n';
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    if (has_id) f += ds.ids[static_cast<std::size_t>(i)] + ",";
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j > 0) f += ',';
      f += detail::dec_str(M(i, j));
    }
    f += '\n';
  }
  detail::write_file(features_path, f);

  std::string r = "response\n";
  for (double y : ds.responses) r += detail::dec_str(y) + "\n";
  detail::write_file(responses_path, r);
}

namespace detail {

// half-Cauchy(0, scale) truncated to (0, cap], drawn by inverse CDF
inline double truncated_half_cauchy(Rng& rng, double scale, double cap) {
  return scale * std::tan(rng.uniform() * std::atan(cap / scale));
}

inline Eigen::VectorXd draw_hyper(const PriorSpec& prior, Eigen::Index p,
                                  Rng& rng) {
  if (prior.kind == PriorKind::ridge) {
    const double root = -std::log1p(-rng.uniform());
    Eigen::VectorXd hyper(1);
    hyper[0] = std::log(prior.nu * root * root);
    return hyper;
  }
  Eigen::VectorXd hyper(p + 1);
  const double tau = truncated_half_cauchy(rng, 1.0, 10.0);
  for (Eigen::Index j = 0; j < p; ++j)
    hyper[j] = 2.0 * std::log(truncated_half_cauchy(rng, tau, 10.0));
  hyper[p] = std::log(tau);
  return hyper;
}

inline Eigen::MatrixXd build_basis(const SyntheticSpec& spec, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto p = static_cast<Eigen::Index>(spec.p);
  Eigen::MatrixXd M(n, p);
  switch (spec.basis_kind) {
    case BasisKind::identity:
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) M(i, j) = rng.gaussian();
      return M;
    case BasisKind::polynomial:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double x = 4.0 * rng.uniform() - 2.0;
        double power = 1.0;
        for (Eigen::Index j = 0; j < p; ++j) {
          power *= x;
          M(i, j) = power;
        }
      }
      return M;
    case BasisKind::random_relu:
    default: {
      constexpr Eigen::Index d = 4;
      Eigen::MatrixXd X(n, d);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < d; ++k) X(i, k) = rng.gaussian();
      for (int attempt = 0; attempt < 100; ++attempt) {
        Eigen::MatrixXd W(p, d);
        for (Eigen::Index j = 0; j < p; ++j)
          for (Eigen::Index k = 0; k < d; ++k) W(j, k) = 0.5 * rng.gaussian();
        Eigen::VectorXd b(p);
        for (Eigen::Index j = 0; j < p; ++j) b[j] = rng.uniform() - 0.5;
        M = ((X * W.transpose()).rowwise() + b.transpose()).cwiseMax(0.0);
        bool ok = true;
        for (Eigen::Index j = 0; j < p && ok; ++j)
          ok = !(M.col(j).array() == 0.0).all();
        if (ok) return M;
      }
      throw SpecMismatch(
          "random_relu basis kept an identically zero column after 100 redraws");
    }
  }
}

}  // namespace detail

//! Draws a well-specified dataset: truth from the (truncated) prior, pseudo
//! responses z_i ~ N(s_i psi_i' beta, s_i^2), responses through the analytic
//! margin quantile. Single rng stream consumed in the order: basis draws,
//! hyperparameter rejection, beta, then one gaussian per observation.
inline std::pair<Dataset, TruthRecord> generate_synthetic(
    const SyntheticSpec& spec) {
  if (spec.n < 10) throw SpecMismatch("synthetic n must be at least 10");
  if (spec.p < 1) throw SpecMismatch("synthetic p must be at least 1");
  if (!(spec.prior.nu > 0.0)) throw SpecMismatch("prior nu must be positive");

  Rng rng(spec.seed);
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto p = static_cast<Eigen::Index>(spec.p);
  BasisMatrix basis{detail::build_basis(spec, rng)};

  // hyperparameters rejected until every scale stays off the degenerate floor
  Eigen::VectorXd hyper;
  ScalingVector s;
  bool accepted = false;
  for (int attempt = 0; attempt < 1000 && !accepted; ++attempt) {
    hyper = detail::draw_hyper(spec.prior, p, rng);
    s = scaling_factors(basis, spec.prior,
                        ParamVector{Eigen::VectorXd::Zero(p), hyper});
    accepted = s.s.minCoeff() >= 0.05;
  }
  if (!accepted)
    throw SpecMismatch("scale rejection exhausted after 1000 attempts");

  const Eigen::VectorXd v =
      precision_diag(spec.prior, ParamVector{Eigen::VectorXd::Zero(p), hyper});
  Eigen::VectorXd beta(p);
  for (Eigen::Index j = 0; j < p; ++j)
    beta[j] = std::sqrt(v[j]) * rng.gaussian();

  const AnalyticMargin margin = make_margin(spec.margin_kind);
  std::vector<double> y(spec.n);
  std::vector<std::string> ids(spec.n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z =
        s.s[i] * basis.values.row(i).dot(beta) + s.s[i] * rng.gaussian();
    const double u = std::clamp(norm_cdf(z), 1e-300,
                                std::nextafter(1.0, 0.0));
    y[static_cast<std::size_t>(i)] = margin.quantile(u);
    ids[static_cast<std::size_t>(i)] =
        detail::u64_str(static_cast<std::uint64_t>(i + 1));
  }
  return {Dataset{std::move(basis), std::move(y), std::move(ids)},
          TruthRecord{ParamVector{std::move(beta), std::move(hyper)},
                      std::move(s), margin}};
}

namespace detail {

inline std::string container_header(const char* kind, const FitMetadata& meta) {
  std::string out = "icnlm 1 ";
  out += kind;
  out += "\nprior ";
  out += meta.prior.kind == PriorKind::ridge ? "ridge" : "horseshoe";
  out += ' ';
  out += hex_str(meta.prior.nu);
  out += "\np " + u64_str(meta.p);
  out += "\nseed " + u64_str(meta.seed);
  out += '\n';
  return out;
}

inline void put_vector(std::string& out, const char* name, const double* data,
                       std::size_t len) {
  out += name;
  out += ' ';
  out += u64_str(len);
  for (std::size_t i = 0; i < len; ++i) {
    out += ' ';
    out += hex_str(data[i]);
  }
  out += '\n';
}

inline void finish_container(const std::string& path, std::string body) {
  body += "checksum " + hex16(fnv1a64(body)) + "\n";
  write_file(path, body);
}

struct ContainerReader {
  std::vector<std::string> lines;
  std::string path;
  std::size_t next = 0;

  std::vector<std::string> take(const char* tag, std::size_t min_tokens) {
    if (next >= lines.size())
      throw ParseError(path + ": unexpected end of container, expected '" +
                       std::string(tag) + "'");
    const std::size_t line_no = ++next;
    auto tokens = split_fields(lines[line_no - 1], ' ');
    tokens.erase(std::remove(tokens.begin(), tokens.end(), std::string()),
                 tokens.end());
    if (tokens.empty() || tokens[0] != tag || tokens.size() < min_tokens)
      throw ParseError(path + " line " + u64_str(line_no) + ": expected '" +
                       std::string(tag) + "' record");
    return tokens;
  }

  double take_scalar(const char* tag) {
    const auto t = take(tag, 2);
    double v = 0.0;
    if (!parse_double(t[1], v, std::chars_format::hex))
      throw ParseError(path + ": malformed hexfloat in '" + std::string(tag) +
                       "'");
    return v;
  }

  std::uint64_t take_count(const char* tag) {
    const auto t = take(tag, 2);
    std::uint64_t v = 0;
    if (!parse_u64(t[1], v))
      throw ParseError(path + ": malformed count in '" + std::string(tag) + "'");
    return v;
  }

  Eigen::VectorXd take_vector(const char* tag) {
    const auto t = take(tag, 2);
    std::uint64_t len = 0;
    if (!parse_u64(t[1], len) || t.size() != 2 + len)
      throw ParseError(path + ": '" + std::string(tag) +
                       "' length disagrees with its entries");
    Eigen::VectorXd out(static_cast<Eigen::Index>(len));
    for (std::uint64_t i = 0; i < len; ++i) {
      double v = 0.0;
      if (!parse_double(t[2 + i], v, std::chars_format::hex))
        throw ParseError(path + ": malformed hexfloat in '" + std::string(tag) +
                         "'");
      out[static_cast<Eigen::Index>(i)] = v;
    }
    return out;
  }

  // bare row of exactly `cols` hexfloats
  Eigen::VectorXd take_row(std::size_t cols) {
    if (next >= lines.size())
      throw ParseError(path + ": unexpected end of container inside a matrix");
    const std::size_t line_no = ++next;
    auto tokens = split_fields(lines[line_no - 1], ' ');
    tokens.erase(std::remove(tokens.begin(), tokens.end(), std::string()),
                 tokens.end());
    if (tokens.size() != cols)
      throw ParseError(path + " line " + u64_str(line_no) +
                       ": expected a row of " + u64_str(cols) + " entries");
    Eigen::VectorXd out(static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < cols; ++i) {
      double v = 0.0;
      if (!parse_double(tokens[i], v, std::chars_format::hex))
        throw ParseError(path + " line " + u64_str(line_no) +
                         ": malformed hexfloat matrix entry");
      out[static_cast<Eigen::Index>(i)] = v;
    }
    return out;
  }

  void expect_end() const {
    if (next != lines.size())
      throw ParseError(path + ": trailing content after the payload");
  }
};

}  // namespace detail

//! Persists a fitted margin (sample, bandwidth, clamp reproduce it exactly).
inline void save_fit(const std::string& path, const MarginalEstimate& m,
                     const FitMetadata& meta) {
  std::string body = detail::container_header("marginal", meta);
  detail::put_vector(body, "sample", m.sample().data(), m.sample().size());
  body += "bandwidth " + detail::hex_str(m.bandwidth()) + "\n";
  body += "clamp " + detail::hex_str(m.support_clamp()) + "\n";
  detail::finish_container(path, body);
}

//! Persists posterior draws with their acceptance rate and ESS vector.
inline void save_fit(const std::string& path, const PosteriorDraws& d,
                     const FitMetadata& meta) {
  std::string body = detail::container_header("draws", meta);
  body += "accept " + detail::hex_str(d.accept_rate) + "\n";
  detail::put_vector(body, "ess", d.ess.data(),
                     static_cast<std::size_t>(d.ess.size()));
  body += "draws " + detail::u64_str(static_cast<std::uint64_t>(d.draws.rows())) +
          ' ' + detail::u64_str(static_cast<std::uint64_t>(d.draws.cols())) +
          "\n";
  for (Eigen::Index i = 0; i < d.draws.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.draws.cols(); ++j) {
      if (j > 0) body += ' ';
      body += detail::hex_str(d.draws(i, j));
    }
    body += '\n';
  }
  detail::finish_container(path, body);
}

//! Persists a variational fit (parameters, ELBO trace, convergence state).
inline void save_fit(const std::string& path, const VariationalFit& f,
                     const FitMetadata& meta) {
  const auto& lam = f.params;
  std::string body = detail::container_header("vifit", meta);
  detail::put_vector(body, "mu", lam.mu.data(),
                     static_cast<std::size_t>(lam.mu.size()));
  body += "factor " + detail::u64_str(static_cast<std::uint64_t>(lam.factor.rows())) +
          ' ' + detail::u64_str(static_cast<std::uint64_t>(lam.factor.cols())) +
          "\n";
  for (Eigen::Index i = 0; i < lam.factor.rows(); ++i) {
    for (Eigen::Index j = 0; j < lam.factor.cols(); ++j) {
      if (j > 0) body += ' ';
      body += detail::hex_str(lam.factor(i, j));
    }
    body += '\n';
  }
  detail::put_vector(body, "diag", lam.diag.data(),
                     static_cast<std::size_t>(lam.diag.size()));
  detail::put_vector(body, "trace", f.elbo_trace.data(), f.elbo_trace.size());
  body += "iterations " + detail::u64_str(f.iterations_run) + "\n";
  body += std::string("converged ") + (f.converged ? "1" : "0") + "\n";
  detail::finish_container(path, body);
}

//! Persists the generating truth of a synthetic dataset.
inline void save_fit(const std::string& path, const TruthRecord& t,
                     const FitMetadata& meta) {
  std::string body = detail::container_header("truth", meta);
  detail::put_vector(body, "beta", t.truth.beta.data(),
                     static_cast<std::size_t>(t.truth.beta.size()));
  detail::put_vector(body, "hyper", t.truth.hyper.data(),
                     static_cast<std::size_t>(t.truth.hyper.size()));
  detail::put_vector(body, "scales", t.s.s.data(),
                     static_cast<std::size_t>(t.s.s.size()));
  detail::put_vector(body, "weights", t.margin.weights.data(),
                     t.margin.weights.size());
  detail::put_vector(body, "means", t.margin.means.data(),
                     t.margin.means.size());
  detail::put_vector(body, "sds", t.margin.sds.data(), t.margin.sds.size());
  detail::finish_container(path, body);
}

//! Reads back any artifact written by save_fit. Verifies the trailing FNV-1a
//! checksum (truncation and corruption raise ChecksumMismatch) and the
//! container version (VersionMismatch) before parsing the payload.
inline LoadedFit load_fit(const std::string& path) {
  const std::string body = detail::read_file(path);
  const std::size_t pos = body.rfind("checksum ");
  if (pos == std::string::npos || (pos != 0 && body[pos - 1] != '\n'))
    throw ChecksumMismatch(path + ": missing checksum line");
  const std::string_view tail(body.data() + pos, body.size() - pos);
  if (tail.size() != 9 + 16 + 1 || tail.back() != '\n')
    throw ChecksumMismatch(path + ": malformed checksum line");
  std::uint64_t stored = 0;
  for (std::size_t i = 9; i < 25; ++i) {
    const char c = tail[i];
    std::uint64_t digit = 0;
    if (c >= '0' && c <= '9')
      digit = static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f')
      digit = static_cast<std::uint64_t>(c - 'a') + 10;
    else
      throw ChecksumMismatch(path + ": malformed checksum line");
    stored = (stored << 4) | digit;
  }
  const std::string_view payload(body.data(), pos);
  if (detail::fnv1a64(payload) != stored)
    throw ChecksumMismatch(path + ": checksum disagrees with contents");

  detail::ContainerReader r{detail::split_lines(payload), path, 0};
  const auto head = r.take("icnlm", 3);
  if (head[1] != "1")
    throw VersionMismatch(path + ": unsupported container version " + head[1]);
  LoadedFit out;
  out.kind = head[2];

  const auto prior_line = r.take("prior", 3);
  if (prior_line[1] == "ridge")
    out.meta.prior.kind = PriorKind::ridge;
  else if (prior_line[1] == "horseshoe")
    out.meta.prior.kind = PriorKind::horseshoe;
  else
    throw ParseError(path + ": unknown prior '" + prior_line[1] + "'");
  if (!detail::parse_double(prior_line[2], out.meta.prior.nu,
                            std::chars_format::hex))
    throw ParseError(path + ": malformed prior nu");
  out.meta.p = static_cast<std::size_t>(r.take_count("p"));
  out.meta.seed = r.take_count("seed");

  if (out.kind == "marginal") {
    const Eigen::VectorXd sample = r.take_vector("sample");
    const double bandwidth = r.take_scalar("bandwidth");
    const double clamp = r.take_scalar("clamp");
    r.expect_end();
    out.margin.emplace(
        std::vector<double>(sample.data(), sample.data() + sample.size()),
        bandwidth, clamp);
  } else if (out.kind == "draws") {
    PosteriorDraws d;
    d.accept_rate = r.take_scalar("accept");
    d.ess = r.take_vector("ess");
    const auto dims = r.take("draws", 3);
    std::uint64_t J = 0, D = 0;
    if (!detail::parse_u64(dims[1], J) || !detail::parse_u64(dims[2], D))
      throw ParseError(path + ": malformed draws dimensions");
    d.draws.resize(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(D));
    for (std::uint64_t i = 0; i < J; ++i)
      d.draws.row(static_cast<Eigen::Index>(i)) = r.take_row(D).transpose();
    r.expect_end();
    out.draws = std::move(d);
  } else if (out.kind == "vifit") {
    VariationalFit f;
    f.params.mu = r.take_vector("mu");
    const auto dims = r.take("factor", 3);
    std::uint64_t rows = 0, cols = 0;
    if (!detail::parse_u64(dims[1], rows) || !detail::parse_u64(dims[2], cols))
      throw ParseError(path + ": malformed factor dimensions");
    f.params.factor.resize(static_cast<Eigen::Index>(rows),
                           static_cast<Eigen::Index>(cols));
    for (std::uint64_t i = 0; i < rows; ++i)
      f.params.factor.row(static_cast<Eigen::Index>(i)) =
          r.take_row(cols).transpose();
    f.params.diag = r.take_vector("diag");
    const Eigen::VectorXd trace = r.take_vector("trace");
    f.elbo_trace.assign(trace.data(), trace.data() + trace.size());
    f.iterations_run = static_cast<std::size_t>(r.take_count("iterations"));
    f.converged = r.take_count("converged") != 0;
    r.expect_end();
    out.vifit = std::move(f);
  } else if (out.kind == "truth") {
    TruthRecord t;
    t.truth.beta = r.take_vector("beta");
    t.truth.hyper = r.take_vector("hyper");
    t.s.s = r.take_vector("scales");
    const Eigen::VectorXd w = r.take_vector("weights");
    const Eigen::VectorXd m = r.take_vector("means");
    const Eigen::VectorXd sd = r.take_vector("sds");
    t.margin.weights.assign(w.data(), w.data() + w.size());
    t.margin.means.assign(m.data(), m.data() + m.size());
    t.margin.sds.assign(sd.data(), sd.data() + sd.size());
    r.expect_end();
    out.truth = std::move(t);
  } else {
    throw ParseError(path + ": unknown artifact kind '" + out.kind + "'");
  }
  return out;
}

//! One prediction table row; lower/upper are written only when the table is
//! saved with a requested interval level.
struct PredictionRow {
  std::string id;
  double mean = 0.0;
  double variance = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

//! Writes the tab-separated prediction table; alpha adds lower/upper columns.
inline void save_predictions(const std::string& path,
                             const std::vector<PredictionRow>& rows,
                             std::optional<double> alpha) {
  std::string out = "id\tmean\tvariance\tq05\tq50\tq95";
  if (alpha) out += "\tlower\tupper";
  out += '\n';
  for (const auto& row : rows) {
    out += row.id;
    out += '\t';
    out += detail::dec_str(row.mean) + '\t' + detail::dec_str(row.variance) +
           '\t' + detail::dec_str(row.q05) + '\t' + detail::dec_str(row.q50) +
           '\t' + detail::dec_str(row.q95);
    if (alpha) out += '\t' + detail::dec_str(row.lower) + '\t' +
                      detail::dec_str(row.upper);
    out += '\n';
  }
  detail::write_file(path, out);
}

//! Writes the five calibration-report artifacts as tab-separated files under
//! the given prefix: metrics.tsv, marginal_calibration.tsv,
//! pit_calibration.tsv, coverage.tsv, error_vs_variance.tsv.
inline void save_report(const std::string& prefix,
                        const CalibrationReport& report) {
  std::string metrics = "metric\tvalue\n";
  metrics += "mae\t" + detail::dec_str(report.metrics.mae) + "\n";
  metrics += "mse\t" + detail::dec_str(report.metrics.mse) + "\n";
  metrics += "accuracy_i\t" + detail::dec_str(report.metrics.accuracy_i) + "\n";
  metrics +=
      "accuracy_ii\t" + detail::dec_str(report.metrics.accuracy_ii) + "\n";
  detail::write_file(prefix + "metrics.tsv", metrics);

  std::string mc = "y\taverage_cdf\tempirical_cdf\n";
  for (const auto& pt : report.marginal_curve)
    mc += detail::dec_str(pt.y) + '\t' + detail::dec_str(pt.average_cdf) +
          '\t' + detail::dec_str(pt.empirical_cdf) + '\n';
  detail::write_file(prefix + "marginal_calibration.tsv", mc);

  std::string pc = "level\tobserved\tdeviation\n";
  for (const auto& pt : report.pit_curve)
    pc += detail::dec_str(pt.level) + '\t' + detail::dec_str(pt.observed) +
          '\t' + detail::dec_str(pt.deviation) + '\n';
  detail::write_file(prefix + "pit_calibration.tsv", pc);

  std::string cov = "level\tobserved\n";
  for (const auto& pt : report.coverage_curve)
    cov += detail::dec_str(pt.level) + '\t' + detail::dec_str(pt.observed) +
           '\n';
  detail::write_file(prefix + "coverage.tsv", cov);

  std::string ev = "threshold\tmse\tretained_fraction\n";
  for (const auto& pt : report.error_variance_curve)
    ev += detail::dec_str(pt.threshold) + '\t' + detail::dec_str(pt.mse) +
          '\t' + detail::dec_str(pt.retained_fraction) + '\n';
  detail::write_file(prefix + "error_vs_variance.tsv", ev);
}

}  // namespace icnlm
