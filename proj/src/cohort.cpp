#include "expltv/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "expltv/error.hpp"
#include "expltv/kvfile.hpp"

namespace expltv {

double gwptr_target(double ltv, double whale_threshold) {
  if (!(whale_threshold > 0.0)) throw DataError("whale threshold R must be positive");
  if (!(ltv >= 0.0) || !std::isfinite(ltv)) throw DataError("LTV must be finite and nonnegative");
  return -std::expm1(-ltv / whale_threshold);
}

int whale_label(double ltv, double whale_threshold) {
  if (!(whale_threshold > 0.0)) throw DataError("whale threshold R must be positive");
  if (!(ltv >= 0.0) || !std::isfinite(ltv)) throw DataError("LTV must be finite and nonnegative");
  return ltv >= whale_threshold ? 1 : 0;
}

void check_label_consistency(const Dataset& data, double whale_threshold) {
  for (std::size_t i = 0; i < data.users.size(); ++i) {
    const UserRecord& u = data.users[i];
    const auto where = "user " + std::to_string(u.user_id) + ": ";
    if (u.purchased != (u.ltv > 0.0 ? 1 : 0)) throw DataError(where + "purchase flag disagrees with LTV");
    if (u.whale != whale_label(u.ltv, whale_threshold))
      throw DataError(where + "whale flag disagrees with LTV under R = " + format_double(whale_threshold));
    if (std::abs(u.gwptr - gwptr_target(u.ltv, whale_threshold)) > 1e-12)
      throw DataError(where + "gwptr target disagrees with LTV under R = " + format_double(whale_threshold));
  }
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::string> csv_header(const DataLayout& layout) {
  std::vector<std::string> cols{"user_id", "day"};
  for (std::size_t i = 0; i < layout.dense; ++i) cols.push_back("dense_" + std::to_string(i));
  for (std::size_t i = 0; i < layout.categorical; ++i) cols.push_back("cat_" + std::to_string(i));
  for (std::size_t i = 0; i < layout.sequences; ++i) cols.push_back("seq_" + std::to_string(i));
  for (const char* c : {"ltv", "s", "g", "gwptr", "segment"}) cols.emplace_back(c);
  return cols;
}

std::string to_csv(const Dataset& data) {
  std::string out;
  const auto header = csv_header(data.layout);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ',';
    out += header[i];
  }
  out += '\n';
  for (const UserRecord& u : data.users) {
    out += std::to_string(u.user_id);
    out += ',';
    out += std::to_string(u.day);
    for (double v : u.dense) {
      out += ',';
      out += format_double(v);
    }
    for (int v : u.categorical) {
      out += ',';
      out += std::to_string(v);
    }
    for (const auto& seq : u.sequences) {
      out += ',';
      for (std::size_t k = 0; k < seq.size(); ++k) {
        if (k) out += '|';
        out += std::to_string(seq[k]);
      }
    }
    out += ',' + format_double(u.ltv);
    out += ',' + std::to_string(u.purchased);
    out += ',' + std::to_string(u.whale);
    out += ',' + format_double(u.gwptr);
    out += ',' + std::to_string(static_cast<int>(u.segment));
    out += '\n';
  }
  return out;
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << to_csv(data);
  if (!out) throw DataError("write failed for " + path);
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

DataLayout layout_from_header(const std::vector<std::string>& cols) {
  DataLayout layout;
  if (cols.size() < 7 || cols[0] != "user_id" || cols[1] != "day")
    throw DataError("header must start with user_id,day", 1);
  std::size_t i = 2;
  while (i < cols.size() && cols[i] == "dense_" + std::to_string(layout.dense)) ++layout.dense, ++i;
  while (i < cols.size() && cols[i] == "cat_" + std::to_string(layout.categorical)) ++layout.categorical, ++i;
  while (i < cols.size() && cols[i] == "seq_" + std::to_string(layout.sequences)) ++layout.sequences, ++i;
  if (csv_header(layout) != cols) throw DataError("unrecognized header", 1);
  return layout;
}

int parse_label(const std::string& s, const char* what, std::size_t line) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw DataError(std::string(what) + " must be 0 or 1, got '" + s + "'", line);
}

}  // namespace

Dataset parse_csv(const std::string& text, const std::optional<DataLayout>& expected) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("missing header row", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line, ',');
  Dataset data;
  data.layout = layout_from_header(header);
  if (expected && !(*expected == data.layout))
    throw DataError("header does not match the expected schema (dense " +
                        std::to_string(expected->dense) + ", categorical " +
                        std::to_string(expected->categorical) + ", sequence " +
                        std::to_string(expected->sequences) + ")",
                    1);
  const DataLayout& lay = data.layout;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_fields(line, ',');
    if (f.size() != header.size())
      throw DataError("expected " + std::to_string(header.size()) + " columns, got " +
                          std::to_string(f.size()),
                      lineno);
    UserRecord u;
    try {
      std::size_t c = 0;
      u.user_id = parse_int(f[c++]);
      u.day = static_cast<int>(parse_int(f[c++]));
      for (std::size_t i = 0; i < lay.dense; ++i) {
        const double v = parse_double(f[c++]);
        if (!std::isfinite(v)) throw DataError("non-finite dense value");
        u.dense.push_back(v);
      }
      for (std::size_t i = 0; i < lay.categorical; ++i) {
        const auto v = parse_int(f[c++]);
        if (v < 0) throw DataError("negative categorical value");
        u.categorical.push_back(static_cast<int>(v));
      }
      for (std::size_t i = 0; i < lay.sequences; ++i) {
        std::vector<int> seq;
        const std::string& cell = f[c++];
        if (!cell.empty()) {
          for (const auto& tok : split_fields(cell, '|')) {
            const auto v = parse_int(tok);
            if (v < 0) throw DataError("negative sequence token");
            seq.push_back(static_cast<int>(v));
          }
        }
        u.sequences.push_back(std::move(seq));
      }
      u.ltv = parse_double(f[c++]);
      if (!std::isfinite(u.ltv) || u.ltv < 0.0) throw DataError("LTV must be finite and nonnegative");
      u.purchased = parse_label(f[c++], "s", lineno);
      u.whale = parse_label(f[c++], "g", lineno);
      u.gwptr = parse_double(f[c++]);
      if (!std::isfinite(u.gwptr) || u.gwptr < 0.0 || u.gwptr > 1.0)
        throw DataError("gwptr must lie in [0, 1]");
      const auto seg = parse_int(f[c++]);
      if (seg < -1 || seg > 2) throw DataError("segment must be -1, 0, 1 or 2");
      u.segment = static_cast<Segment>(seg);
    } catch (const DataError& e) {
      if (e.line() != 0) throw;
      throw DataError(e.what(), lineno);
    }
    if (u.purchased != (u.ltv > 0.0 ? 1 : 0)) throw DataError("s disagrees with LTV", lineno);
    if (u.whale == 1 && u.purchased == 0) throw DataError("whale without a purchase", lineno);
    if ((u.gwptr == 0.0) != (u.ltv == 0.0)) throw DataError("gwptr must be 0 iff LTV is 0", lineno);
    data.users.push_back(std::move(u));
  }
  return data;
}

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Dataset read_csv(const std::string& path) { return parse_csv(slurp(path)); }

Dataset read_csv(const std::string& path, const DataLayout& layout) {
  return parse_csv(slurp(path), layout);
}

// ---------------------------------------------------------------------------
// Splits

DataSplits split(const Dataset& data, const SplitFractions& fr, bool time_ordered) {
  const std::array<double, 3> f{fr.train, fr.valid, fr.test};
  for (double v : f)
    if (!(v >= 0.0)) throw DataError("split fractions must be nonnegative");
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  DataSplits out;
  std::array<Dataset*, 3> parts{&out.train, &out.valid, &out.test};
  for (Dataset* p : parts) p->layout = data.layout;

  if (time_ordered) {
    int max_day = 0;
    for (const auto& u : data.users) max_day = std::max(max_day, u.day);
    const double n_days = static_cast<double>(max_day + 1);
    const int cut1 = static_cast<int>(std::lround(f[0] * n_days));
    const int cut2 = static_cast<int>(std::lround((f[0] + f[1]) * n_days));
    for (const auto& u : data.users) {
      const std::size_t part = u.day < cut1 ? 0 : (u.day < cut2 ? 1 : 2);
      parts[part]->users.push_back(u);
    }
  } else {
    const double n = static_cast<double>(data.users.size());
    const auto cut1 = static_cast<std::size_t>(std::llround(f[0] * n));
    const auto cut2 = static_cast<std::size_t>(std::llround((f[0] + f[1]) * n));
    for (std::size_t i = 0; i < data.users.size(); ++i) {
      const std::size_t part = i < cut1 ? 0 : (i < cut2 ? 1 : 2);
      parts[part]->users.push_back(data.users[i]);
    }
  }
  static constexpr const char* kNames[] = {"train", "valid", "test"};
  for (std::size_t i = 0; i < 3; ++i)
    if (f[i] > 0.0 && parts[i]->empty())
      throw DataError(std::string(kNames[i]) + " split is empty");
  return out;
}

// ---------------------------------------------------------------------------
// Generator

namespace {

const std::vector<std::string> kSpecKeys{
    "n_users",      "purchase_rate",     "whale_rate",        "whale_threshold", "seed",
    "n_days",       "n_dense",           "cat_cardinalities", "seq_vocab",       "seq_max_len",
    "low_mu",       "low_sigma",         "whale_mu",          "whale_sigma",     "signal",
    "dense_shift_low", "dense_shift_whale", "value_loading",  "cat_affinity",    "seq_affinity"};

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_double(v[i]);
  }
  return s;
}

double upper_tail(double log_threshold, const SegmentSpend& s) {
  return 0.5 * std::erfc((log_threshold - s.mu) / (s.sigma * std::sqrt(2.0)));
}

}  // namespace

CohortSpec CohortSpec::from_text(const std::string& text) {
  const KvFile kv = KvFile::parse(text);
  kv.require_known(kSpecKeys);
  CohortSpec s;
  auto nonneg_int = [&](const std::string& key, long long fallback) {
    const long long v = kv.get_int(key, fallback);
    if (v < 0) throw ConfigError(key + " must be nonnegative");
    return v;
  };
  s.n_users = static_cast<std::size_t>(nonneg_int("n_users", static_cast<long long>(s.n_users)));
  s.purchase_rate = kv.get_double("purchase_rate", s.purchase_rate);
  s.whale_rate = kv.get_double("whale_rate", s.whale_rate);
  s.whale_threshold = kv.get_double("whale_threshold", s.whale_threshold);
  s.seed = static_cast<std::uint64_t>(nonneg_int("seed", static_cast<long long>(s.seed)));
  s.n_days = static_cast<int>(kv.get_int("n_days", s.n_days));
  s.n_dense = static_cast<std::size_t>(nonneg_int("n_dense", static_cast<long long>(s.n_dense)));
  if (kv.has("cat_cardinalities")) {
    s.cat_cardinalities.clear();
    for (double v : kv.get_doubles("cat_cardinalities", {})) s.cat_cardinalities.push_back(static_cast<int>(v));
  }
  s.seq_vocab = static_cast<int>(kv.get_int("seq_vocab", s.seq_vocab));
  s.seq_max_len = static_cast<int>(kv.get_int("seq_max_len", s.seq_max_len));
  s.low.mu = kv.get_double("low_mu", s.low.mu);
  s.low.sigma = kv.get_double("low_sigma", s.low.sigma);
  s.whale.mu = kv.get_double("whale_mu", s.whale.mu);
  s.whale.sigma = kv.get_double("whale_sigma", s.whale.sigma);
  s.signal = kv.get_double("signal", s.signal);
  s.value_loading = kv.get_double("value_loading", s.value_loading);
  s.cat_affinity = kv.get_double("cat_affinity", s.cat_affinity);
  s.seq_affinity = kv.get_double("seq_affinity", s.seq_affinity);
  s.dense_shift_low = kv.get_doubles("dense_shift_low", s.dense_shift_low);
  s.dense_shift_whale = kv.get_doubles("dense_shift_whale", s.dense_shift_whale);
  // Shift vectors follow n_dense when only the count was overridden.
  s.dense_shift_low.resize(s.n_dense, 0.0);
  s.dense_shift_whale.resize(s.n_dense, 0.0);
  s.validate();
  return s;
}

CohortSpec CohortSpec::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open cohort spec " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::string CohortSpec::to_text() const {
  std::ostringstream o;
  std::vector<double> cards(cat_cardinalities.begin(), cat_cardinalities.end());
  o << "n_users = " << n_users << '\n'
    << "purchase_rate = " << format_double(purchase_rate) << '\n'
    << "whale_rate = " << format_double(whale_rate) << '\n'
    << "whale_threshold = " << format_double(whale_threshold) << '\n'
    << "seed = " << seed << '\n'
    << "n_days = " << n_days << '\n'
    << "n_dense = " << n_dense << '\n'
    << "cat_cardinalities = " << join(cards) << '\n'
    << "seq_vocab = " << seq_vocab << '\n'
    << "seq_max_len = " << seq_max_len << '\n'
    << "low_mu = " << format_double(low.mu) << '\n'
    << "low_sigma = " << format_double(low.sigma) << '\n'
    << "whale_mu = " << format_double(whale.mu) << '\n'
    << "whale_sigma = " << format_double(whale.sigma) << '\n'
    << "signal = " << format_double(signal) << '\n'
    << "dense_shift_low = " << join(dense_shift_low) << '\n'
    << "dense_shift_whale = " << join(dense_shift_whale) << '\n'
    << "value_loading = " << format_double(value_loading) << '\n'
    << "cat_affinity = " << format_double(cat_affinity) << '\n'
    << "seq_affinity = " << format_double(seq_affinity) << '\n';
  return o.str();
}

void CohortSpec::validate() const {
  if (!(purchase_rate >= 0.0 && purchase_rate < 1.0)) throw ConfigError("purchase_rate must lie in [0, 1)");
  if (!(whale_rate >= 0.0)) throw ConfigError("whale_rate must be nonnegative");
  if (purchase_rate > 0.0 && !(whale_rate < purchase_rate))
    throw ConfigError("whale_rate must be below purchase_rate: every whale is a purchaser");
  if (purchase_rate == 0.0 && whale_rate != 0.0)
    throw ConfigError("whale_rate must be 0 when purchase_rate is 0");
  if (!(whale_threshold > 0.0)) throw ConfigError("whale_threshold must be positive");
  if (!(low.sigma > 0.0) || !(whale.sigma > 0.0)) throw ConfigError("segment log-spend sigma must be positive");
  if (n_days < 1) throw ConfigError("n_days must be at least 1");
  if (seq_vocab < 2) throw ConfigError("seq_vocab must be at least 2 (index 0 is reserved)");
  if (seq_max_len < 1) throw ConfigError("seq_max_len must be at least 1");
  for (int c : cat_cardinalities)
    if (c < 2) throw ConfigError("categorical cardinalities must be at least 2 (index 0 is reserved)");
  if (dense_shift_low.size() != n_dense || dense_shift_whale.size() != n_dense)
    throw ConfigError("dense shift vectors must have n_dense entries");
  if (!(signal >= 0.0)) throw ConfigError("signal must be nonnegative");
  solve_segment_mix(*this);
}

SegmentMix solve_segment_mix(const CohortSpec& spec) {
  SegmentMix mix;
  if (spec.purchase_rate == 0.0) return mix;
  const double log_r = std::log(spec.whale_threshold);
  const double q_low = upper_tail(log_r, spec.low);
  const double q_whale = upper_tail(log_r, spec.whale);
  if (!(q_whale > q_low))
    throw ConfigError("whale segment must exceed R more often than the low-spender segment");
  // Realized whale rate = pw * q_whale + (purchase - pw) * q_low.
  const double pw = (spec.whale_rate - spec.purchase_rate * q_low) / (q_whale - q_low);
  if (pw < 0.0)
    throw ConfigError("infeasible rates: low spenders alone exceed whale_rate (" +
                      format_double(spec.purchase_rate * q_low) + " > " +
                      format_double(spec.whale_rate) + "); raise R or lower low_mu/low_sigma");
  if (pw > spec.purchase_rate)
    throw ConfigError("infeasible rates: whale segment would need more mass than purchase_rate; "
                      "raise whale_mu or lower R");
  mix.whale = pw;
  mix.low = spec.purchase_rate - pw;
  mix.non = 1.0 - spec.purchase_rate;
  return mix;
}

Dataset generate(const CohortSpec& spec) {
  spec.validate();
  const SegmentMix mix = solve_segment_mix(spec);
  Dataset data;
  data.layout = {spec.n_dense, spec.cat_cardinalities.size(), 1};
  data.users.resize(spec.n_users);

  const double sig = spec.signal;
  const double cat_p = std::min(1.0, spec.cat_affinity * sig);
  const double seq_p = std::min(1.0, spec.seq_affinity * sig);
  const int seq_block = std::max(1, (spec.seq_vocab - 1) / 3);

  for (std::size_t i = 0; i < spec.n_users; ++i) {
    // Per-user substream: record i depends only on (seed, i).
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    UserRecord& u = data.users[i];
    u.user_id = static_cast<std::int64_t>(i);
    u.day = std::uniform_int_distribution<int>(0, spec.n_days - 1)(rng);

    const double draw = unif(rng);
    const Segment seg = draw < mix.whale               ? Segment::whale
                        : draw < mix.whale + mix.low ? Segment::low_spender
                                                     : Segment::non_spender;
    u.segment = seg;
    const double resid = normal(rng);
    if (seg == Segment::whale) {
      u.ltv = std::exp(spec.whale.mu + spec.whale.sigma * resid);
    } else if (seg == Segment::low_spender) {
      u.ltv = std::exp(spec.low.mu + spec.low.sigma * resid);
    }
    u.purchased = u.ltv > 0.0 ? 1 : 0;
    u.whale = whale_label(u.ltv, spec.whale_threshold);
    u.gwptr = gwptr_target(u.ltv, spec.whale_threshold);

    const int s = static_cast<int>(seg);
    for (std::size_t j = 0; j < spec.n_dense; ++j) {
      double shift = 0.0;
      if (seg == Segment::low_spender) shift = spec.dense_shift_low[j];
      if (seg == Segment::whale) shift = spec.dense_shift_whale[j];
      double v = sig * shift + normal(rng);
      if (j == 1 && u.purchased) v += sig * spec.value_loading * resid;
      // dense_2 mimics a heavy-tailed count-like feature.
      if (j == 2) v = std::exp(0.75 * v);
      u.dense.push_back(v);
    }
    for (std::size_t c = 0; c < spec.cat_cardinalities.size(); ++c) {
      const int k = spec.cat_cardinalities[c] - 1;  // usable values 1..k
      int v = 1 + std::uniform_int_distribution<int>(0, k - 1)(rng);
      if (unif(rng) < cat_p) v = 1 + (s * std::max(1, k / 3) + static_cast<int>(c)) % k;
      u.categorical.push_back(v);
    }
    const int len = std::uniform_int_distribution<int>(0, spec.seq_max_len)(rng);
    std::vector<int> tokens;
    for (int t = 0; t < len; ++t) {
      int tok = 1 + std::uniform_int_distribution<int>(0, spec.seq_vocab - 2)(rng);
      if (unif(rng) < seq_p)
        tok = 1 + (s * seq_block + std::uniform_int_distribution<int>(0, seq_block - 1)(rng)) %
                      (spec.seq_vocab - 1);
      tokens.push_back(tok);
    }
    u.sequences.push_back(std::move(tokens));
  }
  return data;
}

CohortStats cohort_stats(const Dataset& data, double whale_threshold) {
  CohortStats st;
  st.n_users = data.users.size();
  if (data.users.empty()) return st;
  std::vector<double> spend;
  std::array<double, 3> sum{}, sumsq{};
  std::size_t whales = 0;
  for (const auto& u : data.users) {
    if (u.ltv > 0.0) spend.push_back(u.ltv);
    if (u.ltv >= whale_threshold) ++whales;
    const int s = static_cast<int>(u.segment);
    if (s < 0) continue;
    ++st.segment_counts[s];
    if (u.ltv > 0.0) {
      const double l = std::log(u.ltv);
      sum[s] += l;
      sumsq[s] += l * l;
    }
  }
  const double n = static_cast<double>(st.n_users);
  st.purchase_rate = static_cast<double>(spend.size()) / n;
  st.whale_rate = static_cast<double>(whales) / n;
  for (std::size_t s = 1; s < 3; ++s) {
    const double m = static_cast<double>(st.segment_counts[s]);
    if (m < 2) continue;
    st.segment_log_mean[s] = sum[s] / m;
    st.segment_log_sd[s] = std::sqrt(std::max(0.0, (sumsq[s] - m * st.segment_log_mean[s] * st.segment_log_mean[s]) / (m - 1)));
  }
  if (!spend.empty()) {
    std::sort(spend.begin(), spend.end(), std::greater<>());
    const std::size_t top = std::max<std::size_t>(1, spend.size() / 100);
    double total = 0.0, head = 0.0;
    for (std::size_t i = 0; i < spend.size(); ++i) {
      total += spend[i];
      if (i < top) head += spend[i];
    }
    st.top1pct_spend_share = head / total;
  }
  return st;
}

std::string stats_report(const CohortStats& st, const CohortSpec& spec) {
  std::ostringstream o;
  auto rel = [](double got, double want) { return want == 0.0 ? 0.0 : (got - want) / want; };
  o << "n_users = " << st.n_users << '\n'
    << "whale_threshold = " << format_double(spec.whale_threshold) << '\n'
    << "purchase_rate = " << format_double(st.purchase_rate) << '\n'
    << "purchase_rate_target = " << format_double(spec.purchase_rate) << '\n'
    << "purchase_rate_rel_error = " << format_double(rel(st.purchase_rate, spec.purchase_rate)) << '\n'
    << "whale_rate = " << format_double(st.whale_rate) << '\n'
    << "whale_rate_target = " << format_double(spec.whale_rate) << '\n'
    << "whale_rate_rel_error = " << format_double(rel(st.whale_rate, spec.whale_rate)) << '\n'
    << "top1pct_spend_share = " << format_double(st.top1pct_spend_share) << '\n';
  static constexpr const char* kSeg[] = {"non_spender", "low_spender", "whale"};
  for (std::size_t s = 0; s < 3; ++s) {
    o << "segment_" << kSeg[s] << "_count = " << st.segment_counts[s] << '\n';
    if (s > 0) {
      o << "segment_" << kSeg[s] << "_log_mean = " << format_double(st.segment_log_mean[s]) << '\n'
        << "segment_" << kSeg[s] << "_log_sd = " << format_double(st.segment_log_sd[s]) << '\n';
    }
  }
  return o.str();
}

}  // namespace expltv
