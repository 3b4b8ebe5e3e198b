#include "reportcheck/agreement.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>

#include "reportcheck/error.hpp"

namespace reportcheck {

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "vectors differ in length (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw Error(ErrorCode::kDegenerateInput, "need at least 2 observations");
  double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::kDegenerateInput, "zero variance");
  double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kInvalidArgument, "vectors differ in length");
  auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  return pearson(rx, ry);
}

Preference prefer(double first, double second) {
  if (first > second) return Preference::kFirst;
  if (second > first) return Preference::kSecond;
  return Preference::kTie;
}

double pairwise_agreement(const std::vector<PreferencePair>& pairs) {
  std::size_t counted = 0, matched = 0;
  for (const auto& p : pairs) {
    if (p.human == Preference::kTie) continue;
    ++counted;
    if (p.judge == p.human) ++matched;
  }
  if (counted == 0) throw Error(ErrorCode::kNoPairs, "no pairs with a human preference");
  return static_cast<double>(matched) / static_cast<double>(counted);
}

std::vector<PreferencePair> preferences_from_scores(std::span<const double> judge, std::span<const double> human,
                                                    const std::vector<std::string>& task_of_item) {
  if (judge.size() != human.size() || (!task_of_item.empty() && task_of_item.size() != judge.size())) {
    throw Error(ErrorCode::kInvalidArgument, "score and task vectors differ in length");
  }
  std::vector<PreferencePair> out;
  for (std::size_t a = 0; a < judge.size(); ++a) {
    for (std::size_t b = a + 1; b < judge.size(); ++b) {
      std::string task = task_of_item.empty() ? "" : task_of_item[a];
      if (!task_of_item.empty() && task_of_item[b] != task) continue;
      out.push_back({task, prefer(judge[a], judge[b]), prefer(human[a], human[b])});
    }
  }
  return out;
}

void ScoreMatrix::check_shape() const {
  if (values.size() != raters.size()) {
    throw Error(ErrorCode::kInvalidArgument, "score matrix has " + std::to_string(values.size()) + " rows for " +
                                                 std::to_string(raters.size()) + " raters");
  }
  for (std::size_t r = 0; r < values.size(); ++r) {
    if (values[r].size() != items.size()) {
      throw Error(ErrorCode::kInvalidArgument, "rater " + raters[r] + " has " + std::to_string(values[r].size()) +
                                                   " values for " + std::to_string(items.size()) + " items");
    }
  }
}

bool ScoreMatrix::complete() const {
  for (const auto& row : values)
    for (const auto& v : row)
      if (!v) return false;
  return true;
}

double krippendorff_alpha(const ScoreMatrix& m) {
  m.check_shape();
  if (m.raters.size() < 2) throw Error(ErrorCode::kInsufficientOverlap, "need at least 2 raters");
  // Observed disagreement: within-item ordered pairs weighted 1/(m_u - 1).
  double observed = 0.0;
  std::vector<double> pooled;
  for (std::size_t u = 0; u < m.items.size(); ++u) {
    std::vector<double> vals;
    for (const auto& row : m.values)
      if (row[u]) vals.push_back(*row[u]);
    if (vals.size() < 2) continue;
    double within = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i)
      for (std::size_t j = 0; j < vals.size(); ++j)
        if (i != j) within += (vals[i] - vals[j]) * (vals[i] - vals[j]);
    observed += within / static_cast<double>(vals.size() - 1);
    pooled.insert(pooled.end(), vals.begin(), vals.end());
  }
  if (pooled.size() < 2) throw Error(ErrorCode::kInsufficientOverlap, "no item is rated by two raters");
  double n = static_cast<double>(pooled.size());
  double d_o = observed / n;
  // Expected disagreement over all ordered pairs of pairable values.
  double sum = 0.0, sum_sq = 0.0;
  for (double v : pooled) {
    sum += v;
    sum_sq += v * v;
  }
  double all_pairs = 2.0 * n * sum_sq - 2.0 * sum * sum;
  double d_e = all_pairs / (n * (n - 1.0));
  if (d_e <= 0.0) return 1.0;  // every pairable value identical
  return 1.0 - d_o / d_e;
}

double icc(const ScoreMatrix& m, IccForm form) {
  m.check_shape();
  if (m.raters.size() < 2 || m.items.size() < 2) {
    throw Error(ErrorCode::kDegenerateInput, "need at least 2 raters and 2 items");
  }
  if (!m.complete()) throw Error(ErrorCode::kMissingCells, "ICC needs a complete matrix");
  std::size_t k = m.raters.size(), n = m.items.size();
  double grand = 0.0;
  std::vector<double> item_mean(n, 0.0), rater_mean(k, 0.0);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t i = 0; i < n; ++i) {
      double v = *m.values[r][i];
      grand += v;
      item_mean[i] += v;
      rater_mean[r] += v;
    }
  double dk = static_cast<double>(k), dn = static_cast<double>(n);
  grand /= dk * dn;
  for (auto& v : item_mean) v /= dk;
  for (auto& v : rater_mean) v /= dn;
  double ss_items = 0.0, ss_raters = 0.0, ss_total = 0.0;
  for (double v : item_mean) ss_items += (v - grand) * (v - grand);
  ss_items *= dk;
  for (double v : rater_mean) ss_raters += (v - grand) * (v - grand);
  ss_raters *= dn;
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t i = 0; i < n; ++i) ss_total += (*m.values[r][i] - grand) * (*m.values[r][i] - grand);
  double ss_error = std::max(0.0, ss_total - ss_items - ss_raters);
  double ms_items = ss_items / (dn - 1.0);
  double ms_raters = ss_raters / (dk - 1.0);
  double ms_error = ss_error / ((dn - 1.0) * (dk - 1.0));
  if (ms_items <= 1e-15 * std::max(1.0, ss_total)) {
    throw Error(ErrorCode::kDegenerateInput, "items do not vary");
  }
  double denom = form == IccForm::kSingle
                     ? ms_items + (dk - 1.0) * ms_error + dk * (ms_raters - ms_error) / dn
                     : ms_items + (ms_raters - ms_error) / dn;
  if (denom == 0.0) throw Error(ErrorCode::kDegenerateInput, "zero ICC denominator");
  return (ms_items - ms_error) / denom;
}

std::string_view pooling_name(Pooling p) { return p == Pooling::kGlobal ? "global" : "per-task"; }

std::optional<Pooling> parse_pooling(std::string_view name) {
  if (name == "global") return Pooling::kGlobal;
  if (name == "per-task" || name == "per_task") return Pooling::kPerTask;
  return std::nullopt;
}

StatsInput stats_input_from_json(const nlohmann::json& j) {
  try {
    StatsInput in;
    in.matrix.raters = j.at("raters").get<std::vector<std::string>>();
    in.matrix.items = j.at("items").get<std::vector<std::string>>();
    for (const auto& row : j.at("values")) {
      std::vector<std::optional<double>> r;
      for (const auto& v : row) r.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
      in.matrix.values.push_back(std::move(r));
    }
    if (j.contains("tasks") && !j.at("tasks").is_null()) {
      in.task_of_item = j.at("tasks").get<std::vector<std::string>>();
    }
    if (j.contains("reference") && !j.at("reference").is_null()) in.reference = j.at("reference").get<std::string>();
    in.matrix.check_shape();
    if (!in.task_of_item.empty() && in.task_of_item.size() != in.matrix.items.size()) {
      throw Error(ErrorCode::kInvalidArgument, "tasks must list one task per item");
    }
    if (in.reference &&
        std::find(in.matrix.raters.begin(), in.matrix.raters.end(), *in.reference) == in.matrix.raters.end()) {
      throw Error(ErrorCode::kInvalidArgument, "reference rater " + *in.reference + " is not in raters");
    }
    return in;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("score matrix json: ") + e.what());
  }
}

namespace {

using Stat = std::function<double(const std::vector<std::size_t>& items)>;

// Runs stat once over all items, or per task and averages the defined values.
nlohmann::json pooled(const Stat& stat, const StatsInput& in, Pooling pooling, const std::string& label,
                      nlohmann::json& notes) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < in.matrix.items.size(); ++i) {
    std::string task = pooling == Pooling::kPerTask && !in.task_of_item.empty() ? in.task_of_item[i] : "";
    groups[task].push_back(i);
  }
  double sum = 0.0;
  int defined = 0;
  std::string last_problem;
  for (const auto& [task, items] : groups) {
    try {
      sum += stat(items);
      ++defined;
    } catch (const Error& e) {
      last_problem = std::string(error_code_name(e.code())) + ": " + e.detail() +
                     (pooling == Pooling::kPerTask ? " (task " + task + ")" : "");
    }
  }
  if (defined == 0) {
    notes[label] = last_problem;
    return nullptr;
  }
  if (defined < static_cast<int>(groups.size())) {
    notes[label] = std::to_string(groups.size() - defined) + " task(s) skipped; last: " + last_problem;
  }
  return sum / defined;
}

nlohmann::json guarded(const std::function<double()>& fn, const std::string& label, nlohmann::json& notes) {
  try {
    return fn();
  } catch (const Error& e) {
    notes[label] = std::string(error_code_name(e.code())) + ": " + e.detail();
    return nullptr;
  }
}

}  // namespace

nlohmann::json compute_stats(const StatsInput& in, Pooling pooling) {
  const auto& m = in.matrix;
  m.check_shape();
  nlohmann::json out = {{"pooling", pooling_name(pooling)}, {"notes", nlohmann::json::object()}};
  auto& notes = out["notes"];

  std::optional<std::size_t> ref;
  for (std::size_t r = 0; r < m.raters.size(); ++r)
    if (in.reference && m.raters[r] == *in.reference) ref = r;
  out["reference"] = in.reference ? nlohmann::json(*in.reference) : nlohmann::json(nullptr);

  std::vector<std::size_t> judges;
  for (std::size_t r = 0; r < m.raters.size(); ++r)
    if (!ref || r != *ref) judges.push_back(r);

  if (ref) {
    out["judges"] = nlohmann::json::object();
    for (std::size_t r : judges) {
      const auto& name = m.raters[r];
      // Items both the judge and the reference scored.
      auto paired = [&](const std::vector<std::size_t>& items, std::vector<double>& jx, std::vector<double>& hx,
                        std::vector<std::string>& tasks) {
        for (std::size_t i : items) {
          if (!m.values[r][i] || !m.values[*ref][i]) continue;
          jx.push_back(*m.values[r][i]);
          hx.push_back(*m.values[*ref][i]);
          tasks.push_back(in.task_of_item.empty() ? "" : in.task_of_item[i]);
        }
      };
      auto correlation = [&](bool ranks) {
        return [&, ranks](const std::vector<std::size_t>& items) {
          std::vector<double> jx, hx;
          std::vector<std::string> tasks;
          paired(items, jx, hx, tasks);
          return ranks ? spearman(jx, hx) : pearson(jx, hx);
        };
      };
      auto agreement = [&](const std::vector<std::size_t>& items) {
        std::vector<double> jx, hx;
        std::vector<std::string> tasks;
        paired(items, jx, hx, tasks);
        return pairwise_agreement(preferences_from_scores(jx, hx, tasks));
      };
      out["judges"][name] = {
          {"Pearson r", pooled(correlation(false), in, pooling, name + ".Pearson r", notes)},
          {"Spearman rho", pooled(correlation(true), in, pooling, name + ".Spearman rho", notes)},
          {"Pairwise Agr.", pooled(agreement, in, pooling, name + ".Pairwise Agr.", notes)}};
    }
  }

  std::vector<std::size_t> panel = judges.size() >= 2 ? judges : std::vector<std::size_t>();
  if (panel.empty()) {
    panel.resize(m.raters.size());
    std::iota(panel.begin(), panel.end(), 0);
  }
  ScoreMatrix sub;
  sub.items = m.items;
  for (std::size_t r : panel) {
    sub.raters.push_back(m.raters[r]);
    sub.values.push_back(m.values[r]);
  }
  out["agreement"] = {{"raters", sub.raters},
                      {"Krip. alpha", guarded([&] { return krippendorff_alpha(sub); }, "Krip. alpha", notes)},
                      {"ICC(2,1)", guarded([&] { return icc(sub, IccForm::kSingle); }, "ICC(2,1)", notes)},
                      {"ICC(2,k)", guarded([&] { return icc(sub, IccForm::kAverage); }, "ICC(2,k)", notes)}};
  return out;
}

}  // namespace reportcheck
