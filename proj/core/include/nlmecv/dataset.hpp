#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace nlmecv {

enum class Route { iv_bolus, extravascular };

struct Observation {
    double time = 0.0;  // hours, >= 0
    double dv = 0.0;    // observed concentration
    bool missing = false;
};

struct DoseEvent {
    double time = 0.0;
    double amount = 0.0;  // > 0
    Route route = Route::extravascular;
};

struct Subject {
    std::string id;
    std::vector<Observation> observations;  // sorted ascending by time
    std::vector<DoseEvent> doses;
    std::map<std::string, double> covariates;

    // Number of usable (non-missing) observations, t_i.
    std::size_t n_obs() const;
    double covariate(const std::string& name) const;  // throws if absent
};

enum class CovariateKind { continuous, binary };

struct CovariateSchema {
    std::vector<std::string> names;
    std::map<std::string, CovariateKind> kinds;
};

struct PopulationDataset {
    std::string name;
    std::vector<Subject> subjects;
    CovariateSchema covariate_schema;

    std::size_t n_subjects() const { return subjects.size(); }
    std::size_t total_obs() const;
    const Subject& subject(const std::string& id) const;  // throws if absent
    bool has_subject(const std::string& id) const;
};

// Column mapping for the CSV reader/writer. A row is a dose row when the
// amount column holds a positive value and the dv column is empty; an
// observation row otherwise. Columns not mentioned here are treated as
// subject-level covariates.
struct CsvSchema {
    std::string id_column = "id";
    std::string time_column = "time";
    std::string amount_column = "amt";
    std::string dv_column = "dv";
    Route dose_route = Route::extravascular;
};

struct LoadReport {
    std::size_t dropped_missing_dv = 0;
    std::size_t resorted_subjects = 0;
    std::vector<std::string> warnings;
};

// Reads a header-first CSV into a dataset. Times are sorted (with a
// warning) when out of order; duplicate (id, time) observation rows and
// within-subject covariate changes are errors.
PopulationDataset load_csv(const std::string& path, const CsvSchema& schema,
                           LoadReport* report = nullptr);

// Emits the same format load_csv reads; round-trips exactly.
void write_csv(const PopulationDataset& ds, const std::string& path,
               const CsvSchema& schema = {});

// Copy of ds without the given subject; the input is left untouched.
PopulationDataset remove_subject(const PopulationDataset& ds,
                                 const std::string& id);

// Splits subject ids into k disjoint sets whose sizes differ by at most
// one. Ids are sorted, shuffled with a seeded generator, then dealt
// round-robin, so the result depends only on (id set, k, seed).
std::vector<std::vector<std::string>> partition_subjects(
    const PopulationDataset& ds, std::size_t k, std::uint64_t seed);

// Invariant checks shared by the loader and the simulator.
void validate_dataset(const PopulationDataset& ds);

}  // namespace nlmecv
