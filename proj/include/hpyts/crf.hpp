#pragma once

// Chinese restaurant franchise: tables within arms, dishes (species) shared
// across arms.  The random measures are never materialized; everything here is
// the marginal seating process and its partition probability.

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "hpyts/pyp.hpp"
#include "hpyts/random.hpp"

namespace hpyts {

/// Global (sigma, theta) plus one (sigma_j, theta_j) per arm.
struct HpyParams {
  PyParams global;
  std::vector<PyParams> arms;

  HpyParams(PyParams global_params, std::vector<PyParams> arm_params);
  static HpyParams uniform(int arm_count, double sigma, double theta);

  int arm_count() const noexcept { return static_cast<int>(arms.size()); }
  friend bool operator==(const HpyParams&, const HpyParams&) = default;
};

struct LabeledBatch {
  int arm = 0;
  std::vector<std::string> labels;

  void validate(int arm_count) const;
};

/// Full seating of a franchise.  Each arm maps dish label -> occupancies of the
/// tables serving that dish, in creation order.  Derived counts are cached and
/// kept consistent by the two mutators.
class CrfState {
 public:
  using DishTables = std::map<std::string, std::vector<int>>;

  explicit CrfState(int arm_count);

  int arm_count() const noexcept { return static_cast<int>(arms_.size()); }

  int customers(int arm) const { return arm_at(arm).customers; }   // n_{j..}
  int tables(int arm) const { return arm_at(arm).table_count; }    // m_{j.}
  int total_tables() const noexcept { return total_tables_; }      // m_{..}
  int total_customers() const noexcept;
  int dishes() const noexcept { return static_cast<int>(dish_tables_.size()); }  // K
  int dishes_in(int arm) const { return static_cast<int>(arm_at(arm).tables.size()); }  // K_j

  int customers(int arm, const std::string& dish) const;       // n_{jk}
  int tables(int arm, const std::string& dish) const;          // m_{jk}
  int tables_serving(const std::string& dish) const;           // m_{.k}
  bool has_dish(const std::string& dish) const { return dish_tables_.contains(dish); }

  const DishTables& arm_tables(int arm) const { return arm_at(arm).tables; }
  const std::map<std::string, int>& dish_tables() const noexcept { return dish_tables_; }

  /// Occupancies of every table in `arm`, grouped by dish label.
  std::vector<int> table_occupancies(int arm) const;
  /// m_{.k} for every dish, in label order.
  std::vector<int> tables_per_dish() const;

  /// Seat one customer of `dish` in `arm` at `table` (an index into that
  /// dish's tables; equal to the current count opens a new table).
  void add_customer(int arm, const std::string& dish, std::size_t table);

  /// Open a table for a dish that must not yet exist anywhere.
  void add_customer_new_dish(int arm, const std::string& dish);

  /// Remove one customer; empty tables and dishes served nowhere disappear.
  void remove_customer(int arm, const std::string& dish, std::size_t table);

  /// Throws std::logic_error if any cached count disagrees with the tables.
  void check_invariants() const;

  friend bool operator==(const CrfState&, const CrfState&) = default;

 private:
  struct Arm {
    DishTables tables;
    int customers = 0;
    int table_count = 0;
    friend bool operator==(const Arm&, const Arm&) = default;
  };

  const Arm& arm_at(int arm) const;
  Arm& arm_at(int arm);

  std::vector<Arm> arms_;
  std::map<std::string, int> dish_tables_;
  int total_tables_ = 0;
};

/// log predictive probability of `label` for the next customer of `arm`,
/// marginal over its table.
double observation_log_predictive(const CrfState& state, int arm, const std::string& label,
                                  const HpyParams& params);

/// Seats one observation, sampling its table from the conditional given the
/// label, and returns the log predictive probability of the label.
double seat_observation(CrfState& state, int arm, const std::string& label, const HpyParams& params,
                        Rng& rng);

/// Seats one observation at a given table (index into the dish's tables;
/// equal to the count means a new table).  Returns the log joint probability
/// of label and table.
double seat_observation_at(CrfState& state, int arm, const std::string& label, std::size_t table,
                           const HpyParams& params);

void remove_observation(CrfState& state, int arm, const std::string& label, std::size_t table);

/// Augmented partially exchangeable partition probability: dish-level EPPF on
/// (m_{.1}, ..., m_{.K}) times each arm's EPPF on its table occupancies.
double log_peppf(const CrfState& state, const HpyParams& params);

/// Only the dish-level factor, or only arm j's factor, of log_peppf.
double log_peppf_global_term(const CrfState& state, const PyParams& global);
double log_peppf_arm_term(const CrfState& state, int arm, const PyParams& arm_params);

void to_json(nlohmann::json& j, const PyParams& p);
PyParams py_params_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const HpyParams& p);
HpyParams hpy_params_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const CrfState& s);
CrfState crf_state_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const LabeledBatch& b);
void from_json(const nlohmann::json& j, LabeledBatch& b);

}  // namespace hpyts
