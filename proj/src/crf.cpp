#include "hpyts/crf.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "hpyts/special.hpp"

namespace hpyts {

HpyParams::HpyParams(PyParams global_params, std::vector<PyParams> arm_params)
    : global(global_params), arms(std::move(arm_params)) {
  if (arms.empty()) throw std::invalid_argument("HpyParams: need at least one arm");
}

HpyParams HpyParams::uniform(int arm_count, double sigma, double theta) {
  if (arm_count < 1) throw std::invalid_argument("HpyParams: need at least one arm");
  return HpyParams(PyParams(sigma, theta), std::vector<PyParams>(arm_count, PyParams(sigma, theta)));
}

void LabeledBatch::validate(int arm_count) const {
  if (arm < 0 || arm >= arm_count)
    throw std::invalid_argument("LabeledBatch: arm " + std::to_string(arm) + " out of range");
  if (labels.empty()) throw std::invalid_argument("LabeledBatch: batch is empty");
}

// ---------------------------------------------------------------------------

CrfState::CrfState(int arm_count) {
  if (arm_count < 1) throw std::invalid_argument("CrfState: need at least one arm");
  arms_.resize(arm_count);
}

const CrfState::Arm& CrfState::arm_at(int arm) const {
  if (arm < 0 || arm >= arm_count()) throw std::out_of_range("CrfState: arm index out of range");
  return arms_[arm];
}

CrfState::Arm& CrfState::arm_at(int arm) {
  if (arm < 0 || arm >= arm_count()) throw std::out_of_range("CrfState: arm index out of range");
  return arms_[arm];
}

int CrfState::total_customers() const noexcept {
  int n = 0;
  for (const auto& a : arms_) n += a.customers;
  return n;
}

int CrfState::customers(int arm, const std::string& dish) const {
  const auto& tables = arm_at(arm).tables;
  auto it = tables.find(dish);
  if (it == tables.end()) return 0;
  int n = 0;
  for (int c : it->second) n += c;
  return n;
}

int CrfState::tables(int arm, const std::string& dish) const {
  const auto& tables = arm_at(arm).tables;
  auto it = tables.find(dish);
  return it == tables.end() ? 0 : static_cast<int>(it->second.size());
}

int CrfState::tables_serving(const std::string& dish) const {
  auto it = dish_tables_.find(dish);
  return it == dish_tables_.end() ? 0 : it->second;
}

std::vector<int> CrfState::table_occupancies(int arm) const {
  std::vector<int> out;
  out.reserve(tables(arm));
  for (const auto& [dish, occ] : arm_at(arm).tables) out.insert(out.end(), occ.begin(), occ.end());
  return out;
}

std::vector<int> CrfState::tables_per_dish() const {
  std::vector<int> out;
  out.reserve(dish_tables_.size());
  for (const auto& [dish, m] : dish_tables_) out.push_back(m);
  return out;
}

void CrfState::add_customer(int arm, const std::string& dish, std::size_t table) {
  Arm& a = arm_at(arm);
  auto& occ = a.tables[dish];
  if (table > occ.size()) {
    if (occ.empty()) a.tables.erase(dish);
    throw std::out_of_range("CrfState::add_customer: table index out of range");
  }
  if (table == occ.size()) {
    occ.push_back(1);
    ++a.table_count;
    ++total_tables_;
    ++dish_tables_[dish];
  } else {
    ++occ[table];
  }
  ++a.customers;
}

void CrfState::add_customer_new_dish(int arm, const std::string& dish) {
  if (has_dish(dish)) throw std::logic_error("CrfState: dish '" + dish + "' is already registered");
  add_customer(arm, dish, 0);
}

void CrfState::remove_customer(int arm, const std::string& dish, std::size_t table) {
  Arm& a = arm_at(arm);
  auto it = a.tables.find(dish);
  if (it == a.tables.end() || table >= it->second.size())
    throw std::out_of_range("CrfState::remove_customer: no such table");
  auto& occ = it->second;
  if (occ[table] < 1) throw std::logic_error("CrfState::remove_customer: table is empty");
  --a.customers;
  if (--occ[table] > 0) return;
  occ.erase(occ.begin() + static_cast<std::ptrdiff_t>(table));
  --a.table_count;
  --total_tables_;
  if (occ.empty()) a.tables.erase(it);
  auto dt = dish_tables_.find(dish);
  if (--dt->second == 0) dish_tables_.erase(dt);
}

void CrfState::check_invariants() const {
  std::map<std::string, int> per_dish;
  int all_tables = 0;
  for (std::size_t j = 0; j < arms_.size(); ++j) {
    const Arm& a = arms_[j];
    int n = 0;
    int m = 0;
    for (const auto& [dish, occ] : a.tables) {
      if (occ.empty()) throw std::logic_error("CrfState: dish entry without tables in arm " + std::to_string(j));
      for (int c : occ) {
        if (c < 1) throw std::logic_error("CrfState: empty table in arm " + std::to_string(j));
        n += c;
      }
      m += static_cast<int>(occ.size());
      per_dish[dish] += static_cast<int>(occ.size());
    }
    if (n != a.customers) throw std::logic_error("CrfState: customer count mismatch in arm " + std::to_string(j));
    if (m != a.table_count) throw std::logic_error("CrfState: table count mismatch in arm " + std::to_string(j));
    all_tables += m;
  }
  if (all_tables != total_tables_) throw std::logic_error("CrfState: total table count mismatch");
  if (per_dish != dish_tables_) throw std::logic_error("CrfState: dish table counts mismatch");
}

// ---------------------------------------------------------------------------

namespace {

struct PredictiveTerms {
  double existing = 0.0;   // mass of the dish's existing tables in the arm
  double new_table = 0.0;  // mass of opening a table that serves the dish
};

PredictiveTerms predictive_terms(const CrfState& state, int arm, const std::string& label,
                                 const HpyParams& params) {
  const PyParams& lower = params.arms.at(arm);
  const PyParams& upper = params.global;
  const double denom = lower.theta() + state.customers(arm);
  const double open_table = (lower.theta() + lower.sigma() * state.tables(arm)) / denom;
  const double upper_denom = upper.theta() + state.total_tables();
  const int m_k = state.tables_serving(label);
  const double dish_mass = m_k > 0 ? (m_k - upper.sigma()) / upper_denom
                                   : (upper.theta() + state.dishes() * upper.sigma()) / upper_denom;
  PredictiveTerms t;
  t.existing = (state.customers(arm, label) - lower.sigma() * state.tables(arm, label)) / denom;
  t.new_table = open_table * dish_mass;
  return t;
}

}  // namespace

double observation_log_predictive(const CrfState& state, int arm, const std::string& label,
                                  const HpyParams& params) {
  const auto t = predictive_terms(state, arm, label, params);
  return std::log(t.existing + t.new_table);
}

double seat_observation(CrfState& state, int arm, const std::string& label, const HpyParams& params,
                        Rng& rng) {
  const auto t = predictive_terms(state, arm, label, params);
  const double total = t.existing + t.new_table;
  const double u = uniform01(rng) * total;
  if (u < t.existing) {
    const auto& occ = state.arm_tables(arm).at(label);
    const double sigma_j = params.arms[arm].sigma();
    std::vector<double> w(occ.size());
    for (std::size_t i = 0; i < occ.size(); ++i) w[i] = occ[i] - sigma_j;
    state.add_customer(arm, label, sample_categorical(w, rng));
  } else if (state.has_dish(label)) {
    state.add_customer(arm, label, static_cast<std::size_t>(state.tables(arm, label)));
  } else {
    state.add_customer_new_dish(arm, label);
  }
  return std::log(total);
}

double seat_observation_at(CrfState& state, int arm, const std::string& label, std::size_t table,
                           const HpyParams& params) {
  const auto t = predictive_terms(state, arm, label, params);
  const auto count = static_cast<std::size_t>(state.tables(arm, label));
  double log_p;
  if (table < count) {
    const int occupancy = state.arm_tables(arm).at(label)[table];
    log_p = std::log((occupancy - params.arms[arm].sigma()) /
                     (params.arms[arm].theta() + state.customers(arm)));
  } else if (table == count) {
    log_p = std::log(t.new_table);
  } else {
    throw std::out_of_range("seat_observation_at: table index out of range");
  }
  if (table == count && !state.has_dish(label))
    state.add_customer_new_dish(arm, label);
  else
    state.add_customer(arm, label, table);
  return log_p;
}

void remove_observation(CrfState& state, int arm, const std::string& label, std::size_t table) {
  state.remove_customer(arm, label, table);
}

double log_peppf_global_term(const CrfState& state, const PyParams& global) {
  return eppf_log(state.tables_per_dish(), global.sigma(), global.theta());
}

double log_peppf_arm_term(const CrfState& state, int arm, const PyParams& arm_params) {
  return eppf_log(state.table_occupancies(arm), arm_params.sigma(), arm_params.theta());
}

double log_peppf(const CrfState& state, const HpyParams& params) {
  if (params.arm_count() != state.arm_count())
    throw std::invalid_argument("log_peppf: parameter and state arm counts differ");
  double out = log_peppf_global_term(state, params.global);
  for (int j = 0; j < state.arm_count(); ++j) out += log_peppf_arm_term(state, j, params.arms[j]);
  return out;
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const PyParams& p) {
  j = nlohmann::json{{"sigma", p.sigma()}, {"theta", p.theta()}};
}

PyParams py_params_from_json(const nlohmann::json& j) {
  return PyParams(j.at("sigma").get<double>(), j.at("theta").get<double>());
}

void to_json(nlohmann::json& j, const HpyParams& p) {
  nlohmann::json arms = nlohmann::json::array();
  for (const auto& a : p.arms) arms.push_back(a);
  j = nlohmann::json{{"global", p.global}, {"arms", arms}};
}

HpyParams hpy_params_from_json(const nlohmann::json& j) {
  std::vector<PyParams> arms;
  for (const auto& a : j.at("arms")) arms.push_back(py_params_from_json(a));
  return HpyParams(py_params_from_json(j.at("global")), std::move(arms));
}

void to_json(nlohmann::json& j, const CrfState& s) {
  nlohmann::json arms = nlohmann::json::array();
  for (int a = 0; a < s.arm_count(); ++a) {
    nlohmann::json tables = nlohmann::json::object();
    for (const auto& [dish, occ] : s.arm_tables(a)) tables[dish] = occ;
    arms.push_back(std::move(tables));
  }
  j = nlohmann::json{{"arms", std::move(arms)}};
}

CrfState crf_state_from_json(const nlohmann::json& j) {
  const auto& arms = j.at("arms");
  CrfState s(static_cast<int>(arms.size()));
  for (int a = 0; a < static_cast<int>(arms.size()); ++a) {
    for (const auto& [dish, occ] : arms[a].items()) {
      std::size_t t = 0;
      for (const auto& c : occ) {
        const int count = c.get<int>();
        if (count < 1) throw std::invalid_argument("CrfState JSON: table occupancy must be >= 1");
        for (int i = 0; i < count; ++i) s.add_customer(a, dish, t);
        ++t;
      }
    }
  }
  return s;
}

void to_json(nlohmann::json& j, const LabeledBatch& b) {
  j = nlohmann::json{{"arm", b.arm}, {"labels", b.labels}};
}

void from_json(const nlohmann::json& j, LabeledBatch& b) {
  b.arm = j.at("arm").get<int>();
  b.labels = j.at("labels").get<std::vector<std::string>>();
}

}  // namespace hpyts
