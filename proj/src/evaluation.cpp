#include "fastnose/evaluation.hpp"

#include "fastnose/text.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace fastnose {

std::optional<Odour> label_feature(std::int64_t t, const LabelingParams& p) {
  if (p.t_onset_ms <= t && t < p.t_offset_ms - p.tau_ms + p.d_ms) return p.odour;
  if (t >= p.t_offset_ms + p.d_ms) return Odour::Blank;
  return std::nullopt;
}

void PredictionTimeline::validate() const {
  if (predicted.empty()) throw std::invalid_argument("timeline " + trial_id + " is empty");
  if (pitch_ms <= 0) throw std::invalid_argument("timeline pitch must be positive");
  if (first_window_ms < onset_ms || first_window_ms >= onset_ms + pitch_ms)
    throw std::invalid_argument("timeline " + trial_id + " does not start at the first window after onset");
}

OnsetOffset onset_offset(const PredictionTimeline& tl) {
  tl.validate();
  OnsetOffset r;
  const std::size_t n = tl.predicted.size();
  for (std::size_t k = 0; k < n; ++k)
    if (tl.predicted[k] != Odour::Blank) {
      r.onset_ms = static_cast<int>(k + 1) * tl.pitch_ms;
      break;
    }
  std::size_t k_off = 0;
  while (k_off < n && tl.window_start(k_off) < tl.offset_ms) ++k_off;
  for (std::size_t k = k_off; k < n; ++k)
    if (tl.predicted[k] == Odour::Blank) {
      r.offset_ms = static_cast<int>(k - k_off + 1) * tl.pitch_ms;
      break;
    }
  return r;
}

std::optional<Odour> modal_prediction(const PredictionTimeline& tl) {
  std::array<std::size_t, kOdourCount> count{};
  std::array<std::size_t, kOdourCount> reached{};  // window index at which the current count was reached
  for (std::size_t k = 0; k < tl.predicted.size(); ++k) {
    const auto o = index_of(tl.predicted[k]);
    ++count[o];
    reached[o] = k;
  }
  std::optional<Odour> best;
  for (Odour o : kActiveOdours) {
    const auto i = index_of(o);
    if (count[i] == 0) continue;
    if (!best) {
      best = o;
      continue;
    }
    const auto b = index_of(*best);
    if (count[i] > count[b] || (count[i] == count[b] && reached[i] < reached[b])) best = o;
  }
  return best;
}

TaskResult trial_accuracy(std::span<const PredictionTimeline> timelines) {
  if (timelines.empty()) throw std::invalid_argument("trial_accuracy needs at least one trial");
  TaskResult r;
  for (Odour o : kActiveOdours) r.classes.emplace_back(odour_name(o));
  r.classes.emplace_back(odour_name(Odour::Blank));
  r.confusion.assign(kActiveOdours.size() + 1, std::vector<std::size_t>(kActiveOdours.size() + 1, 0));
  for (const auto& tl : timelines) {
    if (tl.truth == Odour::Blank) throw std::invalid_argument("trial " + tl.trial_id + " has no odour to classify");
    TrialOutcome out;
    out.trial_id = tl.trial_id;
    out.truth = tl.truth;
    const auto m = modal_prediction(tl);
    out.miss = !m;
    out.predicted = m.value_or(Odour::Blank);
    out.timing = onset_offset(tl);
    ++r.confusion[index_of(out.truth)][index_of(out.predicted)];
    if (out.miss) ++r.misses;
    r.trials.push_back(std::move(out));
  }
  r.n = timelines.size();
  r.accuracy = plain_accuracy(r.confusion);
  r.balanced_accuracy = balanced_accuracy(r.confusion);
  return r;
}

double balanced_accuracy(std::size_t hits, std::size_t s_plus, std::size_t cr, std::size_t s_minus) {
  if (s_plus == 0 || s_minus == 0) throw std::invalid_argument("balanced accuracy needs S+ >= 1 and S- >= 1");
  if (hits > s_plus || cr > s_minus) throw std::invalid_argument("counts exceed their totals");
  return (static_cast<double>(hits) / static_cast<double>(s_plus) +
          static_cast<double>(cr) / static_cast<double>(s_minus)) /
         2.0;
}

double balanced_accuracy(const std::vector<std::vector<std::size_t>>& c) {
  double sum = 0.0;
  int rows = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    std::size_t tot = 0;
    for (auto v : c[i]) tot += v;
    if (tot == 0) continue;
    sum += static_cast<double>(i < c[i].size() ? c[i][i] : 0) / static_cast<double>(tot);
    ++rows;
  }
  if (rows == 0) throw std::invalid_argument("empty confusion matrix");
  return sum / rows;
}

double plain_accuracy(const std::vector<std::vector<std::size_t>>& c) {
  std::size_t hit = 0, tot = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < c[i].size(); ++j) {
      tot += c[i][j];
      if (i == j) hit += c[i][j];
    }
  if (tot == 0) throw std::invalid_argument("empty confusion matrix");
  return static_cast<double>(hit) / static_cast<double>(tot);
}

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                                                       std::size_t n) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("label vectors differ in length");
  std::vector<std::vector<std::size_t>> c(n, std::vector<std::size_t>(n, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || predicted[i] < 0 || static_cast<std::size_t>(truth[i]) >= n ||
        static_cast<std::size_t>(predicted[i]) >= n)
      throw std::out_of_range("label outside [0, n_classes)");
    ++c[truth[i]][predicted[i]];
  }
  return c;
}

ChiSquareResult chi2_randomization(const std::vector<Trial>& manifest, std::int64_t bin_ms, ScheduleClass key) {
  if (bin_ms <= 0) throw std::invalid_argument("bin width must be positive");
  if (manifest.empty()) throw std::invalid_argument("empty manifest");
  std::map<std::string, std::size_t> cls;
  auto class_of = [&](const Trial& t) {
    if (key == ScheduleClass::OdourA) return std::string(odour_name(t.odour_a));
    return std::string(odour_name(t.odour_a)) + "/" + (t.odour_b ? std::string(odour_name(*t.odour_b)) : "") + "/" +
           std::to_string(t.duration_ms) + "/" + std::to_string(t.concentration_pct) + "/" +
           text::format_double(t.frequency_hz) + "/" + std::string(mode_name(t.mode));
  };
  std::int64_t t_min = manifest.front().onset_ms, t_max = t_min;
  for (const auto& t : manifest) {
    cls.emplace(class_of(t), 0);
    t_min = std::min(t_min, t.onset_ms);
    t_max = std::max(t_max, t.onset_ms);
  }
  std::size_t k = 0;
  for (auto& [name, idx] : cls) idx = k++;
  const auto bins = static_cast<std::size_t>((t_max - t_min) / bin_ms) + 1;
  std::vector<std::vector<double>> table(cls.size(), std::vector<double>(bins, 0.0));
  for (const auto& t : manifest) table[cls.at(class_of(t))][static_cast<std::size_t>((t.onset_ms - t_min) / bin_ms)] += 1.0;
  return pearson_chi2(table);
}

SeedSummary summarize_seeds(std::span<const double> acc) {
  if (acc.empty()) throw std::invalid_argument("no seeds to summarise");
  SeedSummary s;
  s.mean = mean(acc);
  s.stddev = stddev(acc);
  s.upper = std::min(1.0, s.mean + s.stddev);
  s.lower = std::max(0.0, s.mean - s.stddev);
  return s;
}

}  // namespace fastnose
