#include <amiv/csv.hpp>
#include <amiv/dataset.hpp>
#include <amiv/parallel.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace amiv {

namespace {

constexpr std::uint64_t kSplitStream = 0x9e3779b97f4a7c15ULL;

enum class RowStatus : std::uint8_t { Kept, Stopping, OutOfRange, Failed };

std::string format_exact(double v) { return format_number(v, 17); }

void record_common(Dataset& d, const std::string& kind, const ParamBox& box, const GenerationOptions& opt,
                   const GenerationStats& stats) {
  auto& m = d.meta;
  m.emplace_back("kind", kind);
  m.emplace_back("seed", std::to_string(d.seed));
  m.emplace_back("s0", "1");
  for (const auto& r : box.dims) m.emplace_back("box." + r.name, format_exact(r.low) + "," + format_exact(r.high));
  m.emplace_back("cos.n_terms", std::to_string(opt.cos.n_terms));
  m.emplace_back("cos.trunc_width", format_exact(opt.cos.trunc_width));
  m.emplace_back("cos.richardson_level", std::to_string(opt.cos.richardson_level));
  m.emplace_back("cos.newton_tol", format_exact(opt.cos.newton_tol));
  m.emplace_back("cos.scan_points", std::to_string(opt.cos.scan_points));
  m.emplace_back("requested", std::to_string(stats.requested));
  m.emplace_back("emitted", std::to_string(stats.emitted));
  m.emplace_back("dropped_stopping", std::to_string(stats.dropped_stopping));
  m.emplace_back("dropped_range", std::to_string(stats.dropped_range));
  m.emplace_back("dropped_error", std::to_string(stats.dropped_error));
}

MarketParams unit_spot_params(const Eigen::MatrixXd& x, Eigen::Index i, const ParamBox& box, OptionKind kind) {
  MarketParams p;
  p.s0 = 1.0;
  p.strike = x(i, box.index("strike"));
  p.tau = x(i, box.index("tau"));
  p.rate = x(i, box.index("rate"));
  p.div_yield = x(i, box.index("div_yield"));
  p.sigma = x(i, box.index("sigma"));
  p.kind = kind;
  return p;
}

Dataset assemble(const std::vector<std::string>& columns, const std::vector<RowStatus>& status,
                 const std::vector<std::vector<double>>& values, std::uint64_t seed, GenerationStats& stats) {
  Dataset d;
  d.columns = columns;
  d.seed = seed;
  stats.requested = static_cast<Eigen::Index>(status.size());
  for (RowStatus s : status) {
    stats.emitted += s == RowStatus::Kept;
    stats.dropped_stopping += s == RowStatus::Stopping;
    stats.dropped_range += s == RowStatus::OutOfRange;
    stats.dropped_error += s == RowStatus::Failed;
  }
  d.table.resize(stats.emitted, static_cast<Eigen::Index>(columns.size()));
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < status.size(); ++i) {
    if (status[i] != RowStatus::Kept) continue;
    for (std::size_t j = 0; j < columns.size(); ++j) d.table(row, static_cast<Eigen::Index>(j)) = values[i][j];
    ++row;
  }
  return d;
}

template <typename Fn>
void label_rows(Eigen::Index n, const GenerationOptions& opt, Fn&& fn) {
  std::atomic<Eigen::Index> done{0};
  parallel_for(static_cast<std::size_t>(n), opt.threads, [&](std::size_t i) {
    fn(static_cast<Eigen::Index>(i));
    const Eigen::Index k = ++done;
    if (opt.progress && (k % 1000 == 0 || k == n)) opt.progress(k, n);
  });
}

}  // namespace

void ParamBox::validate() const {
  if (dims.empty()) throw std::invalid_argument("ParamBox: no dimensions");
  for (const auto& r : dims)
    if (!(r.low < r.high)) throw std::invalid_argument("ParamBox: empty range for '" + r.name + "'");
}

int ParamBox::index(const std::string& name) const {
  for (std::size_t i = 0; i < dims.size(); ++i)
    if (dims[i].name == name) return static_cast<int>(i);
  throw std::invalid_argument("ParamBox: no dimension named '" + name + "'");
}

ParamBox ParamBox::implied_vol() {
  return {{{"strike", 0.6, 1.4},
           {"tau", 0.05, 3.0},
           {"rate", -0.05, 0.1},
           {"div_yield", -0.05, 0.1},
           {"sigma", 0.01, 1.05}}};
}

ParamBox ParamBox::forward() {
  return {{{"strike", 0.45, 1.55},
           {"tau", 0.08, 3.05},
           {"rate", -0.1, 0.25},
           {"div_yield", -0.1, 0.25},
           {"sigma", 0.01, 1.05}}};
}

Eigen::MatrixXd lhs_sample(const ParamBox& box, Eigen::Index n, std::uint64_t seed) {
  box.validate();
  if (n < 1) throw std::invalid_argument("lhs_sample: n must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(box.dims.size()));
  std::vector<Eigen::Index> strata(static_cast<std::size_t>(n));
  for (std::size_t j = 0; j < box.dims.size(); ++j) {
    std::iota(strata.begin(), strata.end(), Eigen::Index{0});
    std::shuffle(strata.begin(), strata.end(), rng);
    const auto& r = box.dims[j];
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = (static_cast<double>(strata[static_cast<std::size_t>(i)]) + unit(rng)) / static_cast<double>(n);
      out(i, static_cast<Eigen::Index>(j)) = std::min(r.low + (r.high - r.low) * u, r.high);
    }
  }
  return out;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Validation;
  if (text == "test") return Split::Test;
  throw FormatError("unknown split tag '" + std::string(text) + "'");
}

int Dataset::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw FormatError("dataset: no column '" + name + "'");
  return static_cast<int>(it - columns.begin());
}

Eigen::Index Dataset::count(Split s) const { return std::count(splits.begin(), splits.end(), s); }

Eigen::MatrixXd Dataset::select(const std::vector<std::string>& names, Split s) const {
  std::vector<int> idx;
  for (const auto& n : names) idx.push_back(column(n));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(names.size()), count(s));
  Eigen::Index c = 0;
  for (Eigen::Index r = 0; r < rows(); ++r) {
    if (splits[static_cast<std::size_t>(r)] != s) continue;
    for (std::size_t j = 0; j < idx.size(); ++j) out(static_cast<Eigen::Index>(j), c) = table(r, idx[j]);
    ++c;
  }
  return out;
}

std::string Dataset::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  return {};
}

const std::vector<std::string>& iv_columns() {
  static const std::vector<std::string> c{"log_time_value", "strike", "rate", "div_yield", "tau", "sigma"};
  return c;
}
const std::vector<std::string>& iv_inputs() {
  static const std::vector<std::string> c{"log_time_value", "strike", "rate", "div_yield", "tau"};
  return c;
}
const std::vector<std::string>& forward_columns() {
  static const std::vector<std::string> c{"strike", "tau", "rate", "div_yield", "sigma", "put_price", "call_price"};
  return c;
}
const std::vector<std::string>& forward_inputs() {
  static const std::vector<std::string> c{"strike", "tau", "rate", "div_yield", "sigma"};
  return c;
}
const std::vector<std::string>& forward_targets() {
  static const std::vector<std::string> c{"put_price", "call_price"};
  return c;
}

CosConfig corpus_cos_config() {
  CosConfig c;
  c.n_terms = 256;
  return c;
}

Dataset generate_iv_dataset(const ParamBox& box, Eigen::Index n, std::uint64_t seed, const GenerationOptions& opt,
                            GenerationStats* stats_out) {
  opt.cos.validate();
  const Eigen::MatrixXd x = lhs_sample(box, n, seed);
  std::vector<RowStatus> status(static_cast<std::size_t>(n), RowStatus::Failed);
  std::vector<std::vector<double>> values(static_cast<std::size_t>(n));

  label_rows(n, opt, [&](Eigen::Index i) {
    const auto k = static_cast<std::size_t>(i);
    const MarketParams p = unit_spot_params(x, i, box, OptionKind::Put);
    try {
      // vega only enters the criteria for in-the-money samples
      const PriceResult r = price_american(p, opt.cos, p.in_the_money());
      const RegionLabel label = classify(p, r.price, r.vega, opt.thresholds);
      if (r.in_stopping_region || label.label == Region::Stopping) {
        status[k] = RowStatus::Stopping;
        return;
      }
      if (!(label.log_time_value > opt.log_tv_low && label.log_time_value < opt.log_tv_high)) {
        status[k] = RowStatus::OutOfRange;
        return;
      }
      values[k] = {label.log_time_value, p.strike, p.rate, p.div_yield, p.tau, p.sigma};
      status[k] = RowStatus::Kept;
    } catch (const Error&) {
      status[k] = RowStatus::Failed;
    }
  });

  GenerationStats stats;
  Dataset d = assemble(iv_columns(), status, values, seed, stats);
  split(d, seed);
  record_common(d, "implied_vol", box, opt, stats);
  d.meta.emplace_back("eps1", format_exact(opt.thresholds.eps1));
  d.meta.emplace_back("eps2", format_exact(opt.thresholds.eps2));
  d.meta.emplace_back("log_tv_range", format_exact(opt.log_tv_low) + "," + format_exact(opt.log_tv_high));
  if (stats_out) *stats_out = stats;
  return d;
}

Dataset generate_forward_dataset(const ParamBox& box, Eigen::Index n, std::uint64_t seed,
                                 const GenerationOptions& opt, GenerationStats* stats_out) {
  opt.cos.validate();
  const Eigen::MatrixXd x = lhs_sample(box, n, seed);
  std::vector<RowStatus> status(static_cast<std::size_t>(n), RowStatus::Failed);
  std::vector<std::vector<double>> values(static_cast<std::size_t>(n));

  label_rows(n, opt, [&](Eigen::Index i) {
    const auto k = static_cast<std::size_t>(i);
    const MarketParams put = unit_spot_params(x, i, box, OptionKind::Put);
    try {
      const double put_price = price_american(put, opt.cos, false).price;
      const double call_price = price_american(call_via_symmetry(put.with_kind(OptionKind::Call)), opt.cos, false).price;
      if (!std::isfinite(put_price) || !std::isfinite(call_price)) return;
      values[k] = {put.strike, put.tau, put.rate, put.div_yield, put.sigma, put_price, call_price};
      status[k] = RowStatus::Kept;
    } catch (const Error&) {
      status[k] = RowStatus::Failed;
    }
  });

  GenerationStats stats;
  Dataset d = assemble(forward_columns(), status, values, seed, stats);
  split(d, seed);
  record_common(d, "forward", box, opt, stats);
  if (stats_out) *stats_out = stats;
  return d;
}

void split(Dataset& d, std::uint64_t seed) {
  const Eigen::Index n = d.rows();
  if (n < 10) throw std::invalid_argument("split: need at least 10 rows, have " + std::to_string(n));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed ^ kSplitStream);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<Eigen::Index>(std::llround(0.8 * static_cast<double>(n)));
  const auto n_val = static_cast<Eigen::Index>(std::llround(0.1 * static_cast<double>(n)));
  d.splits.assign(static_cast<std::size_t>(n), Split::Test);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]);
    d.splits[row] = i < n_train ? Split::Train : i < n_train + n_val ? Split::Validation : Split::Test;
  }
}

void write_dataset(const Dataset& d, const std::string& path) {
  if (d.splits.size() != static_cast<std::size_t>(d.rows()))
    throw std::invalid_argument("write_dataset: dataset is not split-tagged");
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  auto header = d.columns;
  header.emplace_back("split");
  write_csv_row(out, header);
  std::vector<std::string> fields(header.size());
  for (Eigen::Index r = 0; r < d.rows(); ++r) {
    for (Eigen::Index c = 0; c < d.table.cols(); ++c) fields[static_cast<std::size_t>(c)] = format_exact(d.table(r, c));
    fields.back() = to_string(d.splits[static_cast<std::size_t>(r)]);
    write_csv_row(out, fields);
  }
  std::ofstream meta(path + ".meta");
  if (!meta) throw Error("cannot write '" + path + ".meta'");
  for (const auto& [k, v] : d.meta) meta << k << '=' << v << '\n';
}

Dataset read_dataset(const std::string& path) {
  const CsvTable csv = read_csv_file(path);
  const std::size_t split_col = csv.column("split");
  Dataset d;
  for (std::size_t j = 0; j < csv.header.size(); ++j)
    if (j != split_col) d.columns.push_back(csv.header[j]);
  d.table.resize(static_cast<Eigen::Index>(csv.rows.size()), static_cast<Eigen::Index>(d.columns.size()));
  d.splits.reserve(csv.rows.size());
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    Eigen::Index c = 0;
    for (std::size_t j = 0; j < csv.header.size(); ++j) {
      if (j == split_col) continue;
      d.table(static_cast<Eigen::Index>(r), c++) = parse_double(csv.rows[r][j]);
    }
    d.splits.push_back(parse_split(csv.rows[r][split_col]));
  }
  std::ifstream meta(path + ".meta");
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    d.meta.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  if (const auto s = d.meta_value("seed"); !s.empty()) d.seed = std::stoull(s);
  return d;
}

}  // namespace amiv
