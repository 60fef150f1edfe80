#include "goal/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "goal/errors.hpp"
#include "goal/serialize.hpp"

namespace goal {

namespace {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

Vec gaussian_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

// Removes the components along `basis` (orthonormal) and normalizes. Returns
// false when the residual is numerically zero.
bool orthonormalize_against(Vec& v, const std::vector<Vec>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const Vec& b : basis) {
      const double p = dot(v, b);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * b[i];
    }
  }
  const double n = std::sqrt(dot(v, v));
  if (n < 1e-10) return false;
  for (double& x : v) x /= n;
  return true;
}

// Random unit vector in span(frame) (orthonormal frame), or in the whole
// space when frame is empty.
Vec random_direction(std::size_t dim, const std::vector<Vec>& frame, std::mt19937_64& rng) {
  Vec v(dim, 0.0);
  if (frame.empty()) {
    v = gaussian_vec(dim, rng);
  } else {
    const Vec coeff = gaussian_vec(frame.size(), rng);
    for (std::size_t f = 0; f < frame.size(); ++f) {
      for (std::size_t i = 0; i < dim; ++i) v[i] += coeff[f] * frame[f][i];
    }
  }
  const double n = std::sqrt(dot(v, v));
  for (double& x : v) x /= n;
  return v;
}

struct DomainShift {
  Vec p, q;  // orthonormal rotation plane
  double cos_t = 1.0;
  double sin_t = 0.0;
  Vec translation;
  double scaling = 1.0;

  void apply(std::span<double> x) const {
    if (!p.empty()) {
      double a = 0.0;
      double b = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        a += p[i] * x[i];
        b += q[i] * x[i];
      }
      const double ra = cos_t * a - sin_t * b;
      const double rb = sin_t * a + cos_t * b;
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += (ra - a) * p[i] + (rb - b) * q[i];
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = scaling * x[i] + translation[i];
  }
};

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t line,
                             const std::string& what) {
  throw ParseError(path.string() + ":" + std::to_string(line) + ": " + what);
}

void write_features(const Mat& x, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (std::size_t i = 0; i < x.rows(); ++i) out << (i ? "," : "") << 'f' << i;
  out << '\n';
  for (std::size_t j = 0; j < x.cols(); ++j) {
    auto c = x.col(j);
    for (std::size_t i = 0; i < c.size(); ++i) out << (i ? "," : "") << format_double(c[i]);
    out << '\n';
  }
}

void write_labels(std::span<const int> y, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "label\n";
  for (int v : y) out << v << '\n';
}

}  // namespace

// ---------------------------------------------------------------------------
// Validation

void SyntheticSpec::validate() const {
  if (k == 0 || ambient_dim == 0 || per_class == 0) {
    throw SpecError("synthetic spec: k, ambient_dim and per_class must be at least 1");
  }
  if (!(noise >= 0.0)) throw SpecError("synthetic spec: noise must be non-negative");
  if (!(center_scale > 0.0)) throw SpecError("synthetic spec: center_scale must be positive");
  if (!(rotation_rad >= 0.0) || rotation_rad > 3.14159265358979323846) {
    throw SpecError("synthetic spec: rotation must lie in [0, π]");
  }
  if (rotation_rad != 0.0 && ambient_dim < 2) {
    throw SpecError("synthetic spec: a rotation needs ambient_dim >= 2");
  }
  if (rotation_rad != 0.0 && shift_in_center_span && k < 2) {
    throw SpecError("synthetic spec: a rotation inside the center span needs k >= 2");
  }
  if (!(translation >= 0.0) || !(scaling > 0.0)) {
    throw SpecError("synthetic spec: translation must be >= 0 and scaling > 0");
  }
}

void DatasetBundle::validate() const {
  if (k == 0) throw SpecError("bundle: k must be at least 1");
  if (x_source.rows() != x_target.rows()) {
    throw SpecError("bundle: source and target feature dimensions differ");
  }
  if (y_source.size() != x_source.cols()) {
    throw SpecError("bundle: " + std::to_string(y_source.size()) + " source labels for " +
                    std::to_string(x_source.cols()) + " source samples");
  }
  std::vector<bool> seen(k, false);
  for (int y : y_source) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw SpecError("bundle: source label " + std::to_string(y) + " outside [0, k)");
    }
    seen[static_cast<std::size_t>(y)] = true;
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (!seen[c]) throw SpecError("bundle: class " + std::to_string(c) + " absent from source");
  }
  if (y_target_true) {
    if (y_target_true->size() != x_target.cols()) {
      throw SpecError("bundle: target label count does not match target samples");
    }
    for (int y : *y_target_true) {
      if (y < 0 || static_cast<std::size_t>(y) >= k) {
        throw SpecError("bundle: target label " + std::to_string(y) + " outside [0, k)");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Generation

DatasetBundle generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::size_t dim = spec.ambient_dim;

  // Centers on the sphere of radius center_scale, pairwise at least
  // center_scale apart (rejection sampling, bounded).
  std::vector<Vec> centers;
  for (std::size_t c = 0; c < spec.k; ++c) {
    Vec best;
    double best_gap = -1.0;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Vec v = gaussian_vec(dim, rng);
      const double n = std::sqrt(dot(v, v));
      for (double& x : v) x *= spec.center_scale / n;
      double gap = std::numeric_limits<double>::infinity();
      for (const Vec& o : centers) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) d2 += (v[i] - o[i]) * (v[i] - o[i]);
        gap = std::min(gap, std::sqrt(d2));
      }
      if (gap > best_gap) {
        best_gap = gap;
        best = v;
      }
      if (gap >= spec.center_scale) break;
    }
    centers.push_back(std::move(best));
  }

  std::vector<Vec> span_frame;
  if (spec.shift_in_center_span) {
    for (const Vec& c : centers) {
      Vec v = c;
      if (orthonormalize_against(v, span_frame)) span_frame.push_back(std::move(v));
    }
  }

  DomainShift shift;
  shift.scaling = spec.scaling;
  shift.translation.assign(dim, 0.0);
  if (spec.rotation_rad != 0.0) {
    Vec p = random_direction(dim, span_frame, rng);
    Vec q;
    do {
      q = random_direction(dim, span_frame, rng);
    } while (!orthonormalize_against(q, {p}));
    shift.p = std::move(p);
    shift.q = std::move(q);
    shift.cos_t = std::cos(spec.rotation_rad);
    shift.sin_t = std::sin(spec.rotation_rad);
  }
  if (spec.translation != 0.0) {
    const Vec t = random_direction(dim, {}, rng);
    for (std::size_t i = 0; i < dim; ++i) shift.translation[i] = t[i] * spec.translation * spec.center_scale;
  }

  const std::size_t n = spec.k * spec.per_class;
  DatasetBundle b;
  b.k = spec.k;
  b.spec = spec;
  b.x_source = Mat(dim, n);
  b.x_target = Mat(dim, n);
  b.y_source.resize(n);
  b.y_target_true = std::vector<int>(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t j = 0;
  for (std::size_t c = 0; c < spec.k; ++c) {
    for (std::size_t s = 0; s < spec.per_class; ++s, ++j) {
      auto xs = b.x_source.col(j);
      auto xt = b.x_target.col(j);
      for (std::size_t i = 0; i < dim; ++i) {
        xs[i] = centers[c][i] + spec.noise * normal(rng);
        xt[i] = centers[c][i] + spec.noise * normal(rng);
      }
      shift.apply(xt);
      b.y_source[j] = static_cast<int>(c);
      (*b.y_target_true)[j] = static_cast<int>(c);
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// File I/O

Mat read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) parse_fail(path, 1, "missing header");
  const auto header = split_csv(trim(line));
  const std::size_t dim = header.size();
  for (std::size_t i = 0; i < dim; ++i) {
    if (trim(header[i]) != "f" + std::to_string(i)) {
      parse_fail(path, 1, "expected header column f" + std::to_string(i));
    }
  }
  std::vector<double> data;
  std::size_t line_no = 1;
  std::size_t samples = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != dim) {
      parse_fail(path, line_no, "expected " + std::to_string(dim) + " values, found " +
                                    std::to_string(cells.size()));
    }
    for (const auto& raw : cells) {
      const std::string cell = trim(raw);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        parse_fail(path, line_no, "invalid number '" + cell + "'");
      }
      data.push_back(v);
    }
    ++samples;
  }
  return Mat(dim, samples, std::move(data));
}

std::vector<int> read_label_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "label") parse_fail(path, 1, "expected header 'label'");
  std::vector<int> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    int v = 0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc() || ptr != line.data() + line.size()) {
      parse_fail(path, line_no, "invalid label '" + line + "'");
    }
    out.push_back(v);
  }
  return out;
}

void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  bundle.validate();
  std::filesystem::create_directories(dir);
  write_features(bundle.x_source, dir / "x_source.csv");
  write_labels(bundle.y_source, dir / "y_source.csv");
  write_features(bundle.x_target, dir / "x_target.csv");
  if (bundle.y_target_true) write_labels(*bundle.y_target_true, dir / "y_target.csv");

  nlohmann::json m;
  m["format"] = "goal-dataset";
  m["version"] = kDatasetVersion;
  m["k"] = bundle.k;
  m["D"] = bundle.ambient_dim();
  m["n_source"] = bundle.x_source.cols();
  m["n_target"] = bundle.x_target.cols();
  m["has_target_labels"] = bundle.y_target_true.has_value();
  if (bundle.spec) m["spec"] = *bundle.spec;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw ParseError("cannot write manifest in " + dir.string());
  out << m.dump(2) << '\n';
}

DatasetBundle load_bundle(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw ParseError("cannot read " + manifest_path.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }

  DatasetBundle b;
  std::size_t dim = 0;
  std::size_t n_source = 0;
  std::size_t n_target = 0;
  bool has_target = false;
  try {
    if (m.at("format") != "goal-dataset") throw ParseError(manifest_path.string() + ": wrong format tag");
    if (m.at("version") != kDatasetVersion) throw ParseError(manifest_path.string() + ": unsupported version");
    b.k = m.at("k").get<std::size_t>();
    dim = m.at("D").get<std::size_t>();
    n_source = m.at("n_source").get<std::size_t>();
    n_target = m.at("n_target").get<std::size_t>();
    has_target = m.at("has_target_labels").get<bool>();
    if (m.contains("spec")) b.spec = m.at("spec").get<SyntheticSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }

  b.x_source = read_feature_csv(dir / "x_source.csv");
  b.y_source = read_label_csv(dir / "y_source.csv");
  b.x_target = read_feature_csv(dir / "x_target.csv");
  if (has_target) b.y_target_true = read_label_csv(dir / "y_target.csv");

  auto check = [&](bool ok, const std::string& what) {
    if (!ok) throw ParseError(dir.string() + ": " + what);
  };
  check(b.x_source.rows() == dim && b.x_target.rows() == dim,
        "feature dimension disagrees with manifest D = " + std::to_string(dim));
  check(b.x_source.cols() == n_source, "x_source.csv has " + std::to_string(b.x_source.cols()) +
                                           " rows, manifest says " + std::to_string(n_source));
  check(b.x_target.cols() == n_target, "x_target.csv has " + std::to_string(b.x_target.cols()) +
                                           " rows, manifest says " + std::to_string(n_target));
  check(b.y_source.size() == n_source, "y_source.csv has " + std::to_string(b.y_source.size()) +
                                           " labels for " + std::to_string(n_source) + " samples");
  if (b.y_target_true) {
    check(b.y_target_true->size() == n_target, "y_target.csv has " +
                                                   std::to_string(b.y_target_true->size()) +
                                                   " labels for " + std::to_string(n_target) +
                                                   " samples");
  }
  const auto max_label = [](const std::vector<int>& y) {
    return y.empty() ? -1 : *std::max_element(y.begin(), y.end());
  };
  int top = max_label(b.y_source);
  if (b.y_target_true) top = std::max(top, max_label(*b.y_target_true));
  check(top + 1 == static_cast<int>(b.k), "manifest k = " + std::to_string(b.k) +
                                              " disagrees with largest label " + std::to_string(top));
  try {
    b.validate();
  } catch (const SpecError& e) {
    throw ParseError(dir.string() + ": " + e.what());
  }
  return b;
}

// ---------------------------------------------------------------------------
// Batching

namespace {

void check_selection(const TrainingView& view, std::span<const int> pseudo,
                     const std::vector<bool>& mask) {
  if (pseudo.size() != view.x_target().cols() || mask.size() != view.x_target().cols()) {
    throw DimensionError("assemble_batch: pseudo-labels/mask must have one entry per target sample");
  }
  std::vector<bool> seen(view.k(), false);
  for (int y : view.y_source()) {
    if (y >= 0 && static_cast<std::size_t>(y) < view.k()) seen[static_cast<std::size_t>(y)] = true;
  }
  for (std::size_t c = 0; c < view.k(); ++c) {
    if (!seen[c]) throw PartitionError("assemble_batch: class " + std::to_string(c) + " absent from source");
  }
}

AssembledBatch build(const TrainingView& view, std::span<const std::size_t> src,
                     std::span<const std::size_t> tgt, std::span<const int> pseudo,
                     const std::vector<bool>& mask) {
  const std::size_t dim = view.ambient_dim();
  const std::size_t n = src.size() + tgt.size();
  Mat x(dim, n);
  std::vector<Domain> domains(n);
  std::vector<int> labels(n);
  std::vector<std::size_t> origin(n);
  std::size_t j = 0;
  for (std::size_t s : src) {
    std::copy_n(view.x_source().col(s).begin(), dim, x.col(j).begin());
    domains[j] = Domain::source;
    labels[j] = view.y_source()[s];
    origin[j++] = s;
  }
  for (std::size_t t : tgt) {
    std::copy_n(view.x_target().col(t).begin(), dim, x.col(j).begin());
    domains[j] = Domain::target;
    labels[j] = mask[t] ? pseudo[t] : kUnlabeled;
    origin[j++] = t;
  }
  return {PartitionedBatch(std::move(x), std::move(domains), std::move(labels), view.k()),
          std::move(origin)};
}

}  // namespace

AssembledBatch assemble_batch(const TrainingView& view, std::span<const int> pseudo_labels,
                              const std::vector<bool>& selection_mask) {
  check_selection(view, pseudo_labels, selection_mask);
  std::vector<std::size_t> src(view.x_source().cols());
  std::vector<std::size_t> tgt(view.x_target().cols());
  std::iota(src.begin(), src.end(), std::size_t{0});
  std::iota(tgt.begin(), tgt.end(), std::size_t{0});
  return build(view, src, tgt, pseudo_labels, selection_mask);
}

std::vector<AssembledBatch> assemble_epoch(const TrainingView& view,
                                           std::span<const int> pseudo_labels,
                                           const std::vector<bool>& selection_mask,
                                           const BatchSpec& spec, std::mt19937_64& rng) {
  if (spec.mode == BatchSpec::Mode::full) {
    std::vector<AssembledBatch> out;
    out.push_back(assemble_batch(view, pseudo_labels, selection_mask));
    return out;
  }
  check_selection(view, pseudo_labels, selection_mask);
  if (spec.per_class == 0) throw SpecError("batch spec: per_class must be at least 1");

  const std::size_t k = view.k();
  std::vector<std::vector<std::size_t>> src_pools(k);
  std::vector<std::vector<std::size_t>> tgt_pools(k + 1);  // last pool: unlabeled
  for (std::size_t s = 0; s < view.x_source().cols(); ++s) {
    src_pools[static_cast<std::size_t>(view.y_source()[s])].push_back(s);
  }
  for (std::size_t t = 0; t < view.x_target().cols(); ++t) {
    const bool sel = selection_mask[t] && pseudo_labels[t] >= 0 &&
                     static_cast<std::size_t>(pseudo_labels[t]) < k;
    tgt_pools[sel ? static_cast<std::size_t>(pseudo_labels[t]) : k].push_back(t);
  }
  std::size_t largest = 0;
  for (auto* pools : {&src_pools, &tgt_pools}) {
    for (auto& pool : *pools) {
      std::shuffle(pool.begin(), pool.end(), rng);
      largest = std::max(largest, pool.size());
    }
  }
  const std::size_t batches = (largest + spec.per_class - 1) / spec.per_class;
  std::vector<AssembledBatch> out;
  for (std::size_t b = 0; b < batches; ++b) {
    std::vector<std::size_t> src;
    std::vector<std::size_t> tgt;
    auto deal = [&](const std::vector<std::size_t>& pool, std::vector<std::size_t>& dst) {
      const std::size_t lo = std::min(pool.size(), b * spec.per_class);
      const std::size_t hi = std::min(pool.size(), lo + spec.per_class);
      dst.insert(dst.end(), pool.begin() + static_cast<std::ptrdiff_t>(lo),
                 pool.begin() + static_cast<std::ptrdiff_t>(hi));
    };
    for (const auto& pool : src_pools) deal(pool, src);
    for (const auto& pool : tgt_pools) deal(pool, tgt);
    out.push_back(build(view, src, tgt, pseudo_labels, selection_mask));
  }
  return out;
}

}  // namespace goal
