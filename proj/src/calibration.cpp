#include "oko/calibration.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "oko/errors.hpp"

namespace oko {

namespace {

void check_eval_set(std::span<const Vec> probs, std::span<const int> labels) {
  if (probs.empty()) throw InvalidArgument("evaluation set is empty");
  if (probs.size() != labels.size()) throw InvalidArgument("probabilities and labels differ in length");
  const std::size_t C = probs.front().size();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].size() != C) throw InvalidArgument("ragged probability vectors");
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= C)
      throw InvalidArgument("label out of range at row " + std::to_string(i));
  }
}

double top_confidence(const Vec& q) { return q[static_cast<std::size_t>(argmax(q))]; }

}  // namespace

ReliabilityBins bin_confidences(std::span<const double> confidences, std::span<const int> correct,
                                std::size_t M, ConfidenceRange range) {
  if (confidences.empty()) throw InvalidArgument("no confidences to bin");
  if (confidences.size() != correct.size()) throw InvalidArgument("confidences and outcomes differ in length");
  if (M == 0) throw InvalidArgument("need at least one bin");
  if (!(range.lo >= 0.0 && range.hi <= 1.0 && range.lo < range.hi))
    throw InvalidArgument("confidence range must be a sub-interval of [0, 1]");
  const double width = (range.hi - range.lo) / static_cast<double>(M);
  ReliabilityBins bins(M);
  std::vector<double> conf_sum(M, 0.0), hit_sum(M, 0.0);
  for (std::size_t b = 0; b < M; ++b) {
    bins[b].lo = range.lo + width * static_cast<double>(b);
    bins[b].hi = b + 1 == M ? range.hi : range.lo + width * static_cast<double>(b + 1);
  }
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= range.lo && c <= range.hi))
      throw InvalidArgument("confidence " + std::to_string(c) + " outside the binned range");
    auto b = static_cast<std::size_t>((c - range.lo) / width);
    if (b >= M) b = M - 1;
    ++bins[b].count;
    conf_sum[b] += c;
    hit_sum[b] += correct[i] != 0 ? 1.0 : 0.0;
  }
  for (std::size_t b = 0; b < M; ++b) {
    if (bins[b].count == 0) continue;
    const double n = static_cast<double>(bins[b].count);
    bins[b].mean_conf = conf_sum[b] / n;
    bins[b].accuracy = hit_sum[b] / n;
  }
  return bins;
}

double ece_from_bins(const ReliabilityBins& bins) {
  std::size_t n = 0;
  for (const auto& b : bins) n += b.count;
  if (n == 0) throw InvalidArgument("ECE of an empty bin set");
  double e = 0.0;
  for (const auto& b : bins) {
    if (b.count == 0) continue;
    e += static_cast<double>(b.count) / static_cast<double>(n) * std::abs(b.accuracy - b.mean_conf);
  }
  return e;
}

double ece(std::span<const double> confidences, std::span<const int> correct, std::size_t M,
           ConfidenceRange range) {
  return ece_from_bins(bin_confidences(confidences, correct, M, range));
}

ReliabilityBins reliability_bins(std::span<const Vec> probs, std::span<const int> labels,
                                 std::size_t M, ConfidenceRange range) {
  check_eval_set(probs, labels);
  std::vector<double> conf(probs.size());
  std::vector<int> hit(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    conf[i] = top_confidence(probs[i]);
    hit[i] = argmax(probs[i]) == labels[i];
  }
  return bin_confidences(conf, hit, M, range);
}

double ece_one_vs_all(std::span<const Vec> probs, std::span<const int> labels, std::size_t M) {
  check_eval_set(probs, labels);
  std::vector<double> conf;
  std::vector<int> hit;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    for (std::size_t c = 0; c < probs[i].size(); ++c) {
      conf.push_back(probs[i][c]);
      hit.push_back(static_cast<int>(c) == labels[i]);
    }
  }
  return ece(conf, hit, M);
}

void write_bins_csv(const std::filesystem::path& path, const ReliabilityBins& bins) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << "bin_lo,bin_hi,count,mean_conf,accuracy\n";
  char line[256];
  for (const auto& b : bins) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%zu,%.17g,%.17g\n", b.lo, b.hi, b.count,
                  b.mean_conf, b.accuracy);
    out << line;
  }
}

ReliabilityBins read_bins_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "bin_lo,bin_hi,count,mean_conf,accuracy")
    throw InvalidArgument("unexpected bins CSV header in " + path.string());
  ReliabilityBins bins;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ReliabilityBin b;
    std::istringstream ss(line);
    std::string f[5];
    for (auto& s : f) {
      if (!std::getline(ss, s, ',')) throw InvalidArgument("short row in " + path.string());
    }
    try {
      b.lo = std::stod(f[0]);
      b.hi = std::stod(f[1]);
      b.count = std::stoull(f[2]);
      b.mean_conf = std::stod(f[3]);
      b.accuracy = std::stod(f[4]);
    } catch (const std::exception&) {
      throw InvalidArgument("malformed number in " + path.string());
    }
    bins.push_back(b);
  }
  return bins;
}

double rc(int y, std::span<const double> q) {
  if (y < 0 || static_cast<std::size_t>(y) >= q.size()) throw InvalidArgument("rc: label out of range");
  const double qy = q[static_cast<std::size_t>(y)];
  if (!(qy > 0.0)) return std::numeric_limits<double>::infinity();
  return -std::log(qy) - entropy(q);
}

RcStats rc_stats(std::span<const Vec> probs, std::span<const int> labels) {
  check_eval_set(probs, labels);
  RcStats s;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double v = rc(labels[i], probs[i]);
    if (!std::isfinite(v)) {
      ++s.n_infinite;
      continue;
    }
    ++s.n_finite;
    sum += v;
    sum2 += v * v;
  }
  if (s.n_finite > 0) {
    const double n = static_cast<double>(s.n_finite);
    s.mean = sum / n;
    if (s.n_finite > 1) {
      const double var = std::max(0.0, (sum2 - n * s.mean * s.mean) / (n - 1.0));
      s.std_error = std::sqrt(var / n);
    }
  }
  return s;
}

double mean_rc(std::span<const Vec> probs, std::span<const int> labels) {
  return rc_stats(probs, labels).mean;
}

EntropyPartition entropy_partition(std::span<const Vec> probs, std::span<const int> labels) {
  check_eval_set(probs, labels);
  EntropyPartition p;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double h = entropy(probs[i]);
    (argmax(probs[i]) == labels[i] ? p.correct : p.incorrect).push_back(h);
  }
  return p;
}

Vec temperature_scale(std::span<const double> z, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("temperature must be positive and finite");
  Vec s(z.begin(), z.end());
  for (double& v : s) v /= tau;
  return softmax(s);
}

double mae_entropy_vs_xent(std::span<const XentEntropyMeans> settings) {
  if (settings.empty()) throw InvalidArgument("no settings to average");
  double s = 0.0;
  for (const auto& m : settings) s += std::abs(m.mean_xent - m.mean_entropy);
  return s / static_cast<double>(settings.size());
}

Histogram histogram(std::span<const double> values, double lo, double hi, std::size_t bins) {
  if (bins == 0 || !(hi > lo)) throw InvalidArgument("histogram needs bins > 0 and hi > lo");
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
  const double w = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    const double t = (v - lo) / w;
    std::size_t b = t <= 0.0 ? 0 : static_cast<std::size_t>(t);
    if (b >= bins) b = bins - 1;
    ++h.counts[b];
  }
  return h;
}

CalibrationReport evaluate(std::span<const Vec> probs, std::span<const int> labels, std::size_t M,
                           std::size_t entropy_bins) {
  check_eval_set(probs, labels);
  CalibrationReport r;
  r.n = probs.size();
  const std::size_t C = probs.front().size();
  r.num_classes = static_cast<int>(C);
  r.ece_bins = M;
  r.bins = reliability_bins(probs, labels, M);
  r.ece = ece_from_bins(r.bins);
  r.ece_one_vs_all = ece_one_vs_all(probs, labels, M);

  r.per_class_count.assign(C, 0);
  r.per_class_accuracy.assign(C, 0.0);
  double brier = 0.0, xent = 0.0, ent = 0.0;
  std::size_t finite = 0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    brier += brier_score(labels[i], probs[i]);
    ++r.per_class_count[y];
    if (argmax(probs[i]) == labels[i]) {
      ++r.n_correct;
      r.per_class_accuracy[y] += 1.0;
    }
    if (probs[i][y] > 0.0) {
      xent += -std::log(probs[i][y]);
      ent += entropy(probs[i]);
      ++finite;
    }
  }
  r.n_incorrect = r.n - r.n_correct;
  r.accuracy = static_cast<double>(r.n_correct) / static_cast<double>(r.n);
  r.brier = brier / static_cast<double>(r.n);
  for (std::size_t c = 0; c < C; ++c) {
    if (r.per_class_count[c] > 0) r.per_class_accuracy[c] /= static_cast<double>(r.per_class_count[c]);
  }
  const RcStats rs = rc_stats(probs, labels);
  r.mean_rc = rs.mean;
  r.rc_std_error = rs.std_error;
  r.rc_infinite = rs.n_infinite;
  if (finite > 0) {
    r.mean_xent = xent / static_cast<double>(finite);
    r.mean_entropy = ent / static_cast<double>(finite);
  }
  r.xent_entropy_gap = std::abs(r.mean_xent - r.mean_entropy);

  const EntropyPartition part = entropy_partition(probs, labels);
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  r.mean_entropy_correct = mean(part.correct);
  r.mean_entropy_incorrect = mean(part.incorrect);
  const double hmax = C > 1 ? std::log(static_cast<double>(C)) : 1.0;
  r.entropy_hist_correct = histogram(part.correct, 0.0, hmax, entropy_bins);
  r.entropy_hist_incorrect = histogram(part.incorrect, 0.0, hmax, entropy_bins);
  return r;
}

namespace {

using nlohmann::json;

json hist_json(const Histogram& h) { return json{{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}}; }

Histogram hist_from(const json& j) {
  return Histogram{j.at("lo").get<double>(), j.at("hi").get<double>(),
                   j.at("counts").get<std::vector<std::size_t>>()};
}

}  // namespace

std::string report_to_json(const CalibrationReport& r) {
  json bins = json::array();
  for (const auto& b : r.bins) {
    bins.push_back({{"bin_lo", b.lo}, {"bin_hi", b.hi}, {"count", b.count},
                    {"mean_conf", b.mean_conf}, {"accuracy", b.accuracy}});
  }
  json j{
      {"n", r.n},
      {"num_classes", r.num_classes},
      {"accuracy", r.accuracy},
      {"ece_bins", r.ece_bins},
      {"ece", r.ece},
      {"ece_one_vs_all", r.ece_one_vs_all},
      {"brier", r.brier},
      {"mean_rc", r.mean_rc},
      {"rc_std_error", r.rc_std_error},
      {"rc_infinite", r.rc_infinite},
      {"mean_xent", r.mean_xent},
      {"mean_entropy", r.mean_entropy},
      {"xent_entropy_gap", r.xent_entropy_gap},
      {"n_correct", r.n_correct},
      {"n_incorrect", r.n_incorrect},
      {"mean_entropy_correct", r.mean_entropy_correct},
      {"mean_entropy_incorrect", r.mean_entropy_incorrect},
      {"entropy_hist_correct", hist_json(r.entropy_hist_correct)},
      {"entropy_hist_incorrect", hist_json(r.entropy_hist_incorrect)},
      {"reliability_bins", bins},
      {"per_class_count", r.per_class_count},
      {"per_class_accuracy", r.per_class_accuracy},
  };
  return j.dump(2);
}

CalibrationReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    CalibrationReport r;
    r.n = j.at("n").get<std::size_t>();
    r.num_classes = j.at("num_classes").get<int>();
    r.accuracy = j.at("accuracy").get<double>();
    r.ece_bins = j.at("ece_bins").get<std::size_t>();
    r.ece = j.at("ece").get<double>();
    r.ece_one_vs_all = j.at("ece_one_vs_all").get<double>();
    r.brier = j.at("brier").get<double>();
    r.mean_rc = j.at("mean_rc").get<double>();
    r.rc_std_error = j.at("rc_std_error").get<double>();
    r.rc_infinite = j.at("rc_infinite").get<std::size_t>();
    r.mean_xent = j.at("mean_xent").get<double>();
    r.mean_entropy = j.at("mean_entropy").get<double>();
    r.xent_entropy_gap = j.at("xent_entropy_gap").get<double>();
    r.n_correct = j.at("n_correct").get<std::size_t>();
    r.n_incorrect = j.at("n_incorrect").get<std::size_t>();
    r.mean_entropy_correct = j.at("mean_entropy_correct").get<double>();
    r.mean_entropy_incorrect = j.at("mean_entropy_incorrect").get<double>();
    r.entropy_hist_correct = hist_from(j.at("entropy_hist_correct"));
    r.entropy_hist_incorrect = hist_from(j.at("entropy_hist_incorrect"));
    for (const auto& b : j.at("reliability_bins")) {
      r.bins.push_back({b.at("bin_lo").get<double>(), b.at("bin_hi").get<double>(),
                        b.at("count").get<std::size_t>(), b.at("mean_conf").get<double>(),
                        b.at("accuracy").get<double>()});
    }
    r.per_class_count = j.at("per_class_count").get<std::vector<std::size_t>>();
    r.per_class_accuracy = j.at("per_class_accuracy").get<std::vector<double>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed calibration report: ") + e.what());
  }
}

}  // namespace oko
