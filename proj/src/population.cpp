#include "hpyts/population.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace hpyts {

PopulationSpec::PopulationSpec(std::string name, std::string kind, std::vector<std::string> labels,
                               std::vector<double> weights)
    : name_(std::move(name)), kind_(std::move(kind)), labels_(std::move(labels)) {
  if (labels_.empty()) throw std::invalid_argument("population '" + name_ + "': no species");
  if (weights.size() != labels_.size())
    throw std::invalid_argument("population '" + name_ + "': label and weight counts differ");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w))
      throw std::invalid_argument("population '" + name_ + "': weights must be positive and finite");
    total += w;
  }
  probs_.reserve(weights.size());
  cdf_.reserve(weights.size());
  double running = 0.0;
  for (double w : weights) {
    probs_.push_back(w / total);
    running += w / total;
    cdf_.push_back(running);
  }
  cdf_.back() = 1.0;
}

std::size_t PopulationSpec::draw_index(Rng& rng) const {
  const double u = uniform01(rng);
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return std::min(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
}

std::vector<std::string> PopulationSpec::sample(int n, Rng& rng) const {
  if (n < 0) throw std::invalid_argument("PopulationSpec::sample: negative sample size");
  std::vector<std::string> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(labels_[draw_index(rng)]);
  return out;
}

PopulationSpec zipf_population(int N, double s, std::string name, int label_offset) {
  if (N < 1) throw std::invalid_argument("zipf_population: N must be >= 1");
  if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("zipf_population: s must be positive");
  std::vector<std::string> labels;
  std::vector<double> weights;
  labels.reserve(N);
  weights.reserve(N);
  // k^-s relative to rank 1, so the largest weight is exactly 1.
  for (int k = 1; k <= N; ++k) {
    labels.push_back("s" + std::to_string(label_offset + k));
    weights.push_back(std::exp(-s * std::log(static_cast<double>(k))));
  }
  return PopulationSpec(std::move(name), "zipf", std::move(labels), std::move(weights));
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<ArmLabelCounts> read_arm_label_counts(std::istream& in,
                                                  const std::optional<std::vector<std::string>>& expected_arms) {
  std::vector<ArmLabelCounts> out;
  std::map<std::string, std::size_t> arm_pos;
  std::vector<std::map<std::string, std::size_t>> label_pos;
  auto add_arm = [&](const std::string& arm) {
    arm_pos.emplace(arm, out.size());
    out.push_back(ArmLabelCounts{arm, {}});
    label_pos.emplace_back();
  };
  if (expected_arms) {
    for (const auto& a : *expected_arms) {
      if (arm_pos.contains(a)) throw std::invalid_argument("replay: duplicate expected arm '" + a + "'");
      add_arm(a);
    }
  }

  std::string line;
  int line_no = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto fields = split_csv(t);
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (first_content) {
      first_content = false;
      if (fields.size() >= 2 && fields[0] == "arm" && fields[1] == "label") continue;
    }
    if (fields.size() < 2 || fields.size() > 3) throw std::invalid_argument(where + "expected arm,label[,count]");
    const std::string& arm = fields[0];
    const std::string& label = fields[1];
    if (arm.empty()) throw std::invalid_argument(where + "empty arm");
    if (label.empty()) throw std::invalid_argument(where + "empty label");
    long long count = 1;
    if (fields.size() == 3) {
      const auto& c = fields[2];
      const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), count);
      if (ec != std::errc() || ptr != c.data() + c.size() || count < 1)
        throw std::invalid_argument(where + "count must be a positive integer, got '" + c + "'");
    }
    if (!arm_pos.contains(arm)) {
      if (expected_arms) throw std::invalid_argument(where + "unknown arm '" + arm + "'");
      add_arm(arm);
    }
    const std::size_t a = arm_pos.at(arm);
    auto& counts = out[a].counts;
    if (auto it = label_pos[a].find(label); it != label_pos[a].end()) {
      counts[it->second].second += count;
    } else {
      label_pos[a].emplace(label, counts.size());
      counts.emplace_back(label, count);
    }
  }
  return out;
}

std::vector<PopulationSpec> load_replay(std::istream& in, const std::optional<std::vector<std::string>>& expected_arms) {
  std::vector<ArmLabelCounts> rows;
  try {
    rows = read_arm_label_counts(in, expected_arms);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("replay ") + e.what());
  }
  if (rows.empty()) throw std::invalid_argument("replay: no rows");
  std::vector<PopulationSpec> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.counts.empty()) throw std::invalid_argument("replay: arm '" + r.arm + "' has no rows");
    std::vector<std::string> labels;
    std::vector<double> weights;
    for (const auto& [label, count] : r.counts) {
      labels.push_back(label);
      weights.push_back(static_cast<double>(count));
    }
    out.emplace_back(r.arm, "categorical", std::move(labels), std::move(weights));
  }
  return out;
}

std::vector<PopulationSpec> load_replay_file(const std::string& path,
                                             const std::optional<std::vector<std::string>>& expected_arms) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("replay: cannot open '" + path + "'");
  return load_replay(in, expected_arms);
}

}  // namespace hpyts
