#include "nlmecv/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "nlmecv/rng.hpp"

namespace nlmecv {

std::size_t Subject::n_obs() const {
    std::size_t n = 0;
    for (const auto& o : observations)
        if (!o.missing) ++n;
    return n;
}

double Subject::covariate(const std::string& name) const {
    auto it = covariates.find(name);
    if (it == covariates.end())
        throw std::runtime_error("subject " + id + ": covariate '" + name +
                                 "' not present");
    return it->second;
}

std::size_t PopulationDataset::total_obs() const {
    std::size_t n = 0;
    for (const auto& s : subjects) n += s.n_obs();
    return n;
}

const Subject& PopulationDataset::subject(const std::string& id) const {
    for (const auto& s : subjects)
        if (s.id == id) return s;
    throw std::runtime_error("dataset '" + name + "': unknown subject id '" +
                             id + "'");
}

bool PopulationDataset::has_subject(const std::string& id) const {
    for (const auto& s : subjects)
        if (s.id == id) return true;
    return false;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        // strip surrounding whitespace
        auto b = field.find_first_not_of(" \t\r");
        auto e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string()
                                             : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

int find_column(const std::vector<std::string>& header, const std::string& name) {
    auto lower = [](std::string s) {
        for (auto& c : s) c = static_cast<char>(std::tolower(c));
        return s;
    };
    const std::string want = lower(name);
    for (std::size_t i = 0; i < header.size(); ++i)
        if (lower(header[i]) == want) return static_cast<int>(i);
    return -1;
}

}  // namespace

PopulationDataset load_csv(const std::string& path, const CsvSchema& schema,
                           LoadReport* report) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);

    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(path + ": no subjects (empty file)");
    const auto header = split_csv_line(line);

    const int id_col = find_column(header, schema.id_column);
    const int time_col = find_column(header, schema.time_column);
    const int amt_col = find_column(header, schema.amount_column);
    const int dv_col = find_column(header, schema.dv_column);
    if (id_col < 0)
        throw std::runtime_error(path + ": missing required column '" +
                                 schema.id_column + "'");
    if (time_col < 0)
        throw std::runtime_error(path + ": missing required column '" +
                                 schema.time_column + "'");
    if (amt_col < 0 && dv_col < 0)
        throw std::runtime_error(path + ": need at least one of '" +
                                 schema.amount_column + "'/'" +
                                 schema.dv_column + "'");

    std::vector<int> cov_cols;
    std::vector<std::string> cov_names;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const int ic = static_cast<int>(i);
        if (ic == id_col || ic == time_col || ic == amt_col || ic == dv_col)
            continue;
        if (header[i].empty()) continue;
        cov_cols.push_back(ic);
        cov_names.push_back(header[i]);
    }

    PopulationDataset ds;
    ds.name = path;
    ds.covariate_schema.names = cov_names;

    std::vector<std::string> order;  // first-seen subject order
    std::map<std::string, Subject> by_id;
    LoadReport local;
    LoadReport& rep = report ? *report : local;
    std::size_t line_no = 1;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto fields = split_csv_line(line);
        auto field_at = [&](int col) -> std::string {
            return (col >= 0 && col < static_cast<int>(fields.size()))
                       ? fields[static_cast<std::size_t>(col)]
                       : std::string();
        };

        const std::string id = field_at(id_col);
        if (id.empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": empty subject id");
        double time = 0.0;
        if (!parse_double(field_at(time_col), time))
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": unparseable time");
        if (time < 0.0)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": negative time");

        auto [it, inserted] = by_id.try_emplace(id);
        if (inserted) {
            it->second.id = id;
            order.push_back(id);
        }
        Subject& subj = it->second;

        // Covariates must be constant within subject.
        for (std::size_t c = 0; c < cov_cols.size(); ++c) {
            double v;
            if (!parse_double(field_at(cov_cols[c]), v)) continue;
            auto cit = subj.covariates.find(cov_names[c]);
            if (cit == subj.covariates.end()) {
                subj.covariates[cov_names[c]] = v;
            } else if (cit->second != v) {
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": covariate '" + cov_names[c] +
                                         "' varies within subject " + id);
            }
        }

        double amt = 0.0;
        const bool has_amt = parse_double(field_at(amt_col), amt) && amt != 0.0;
        const std::string dv_field = field_at(dv_col);
        if (has_amt && dv_field.empty()) {
            if (amt <= 0.0)
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": dose amount must be positive");
            subj.doses.push_back({time, amt, schema.dose_route});
            continue;
        }

        double dv = 0.0;
        if (!parse_double(dv_field, dv)) {
            ++rep.dropped_missing_dv;
            continue;
        }
        subj.observations.push_back({time, dv, false});
    }

    for (const auto& id : order) {
        Subject& subj = by_id[id];
        bool sorted = std::is_sorted(
            subj.observations.begin(), subj.observations.end(),
            [](const Observation& a, const Observation& b) { return a.time < b.time; });
        if (!sorted) {
            std::stable_sort(subj.observations.begin(), subj.observations.end(),
                             [](const Observation& a, const Observation& b) {
                                 return a.time < b.time;
                             });
            ++rep.resorted_subjects;
            rep.warnings.push_back("subject " + id + ": observations re-sorted by time");
        }
        for (std::size_t j = 1; j < subj.observations.size(); ++j) {
            if (subj.observations[j].time == subj.observations[j - 1].time)
                throw std::runtime_error(path + ": duplicate observation time " +
                                         format_double(subj.observations[j].time) +
                                         " for subject " + id);
        }
        ds.subjects.push_back(std::move(subj));
    }

    if (ds.subjects.empty()) throw std::runtime_error(path + ": no subjects");
    if (rep.dropped_missing_dv > 0)
        rep.warnings.push_back(std::to_string(rep.dropped_missing_dv) +
                               " rows with missing DV dropped");

    // Infer covariate kinds: binary iff every observed value is 0 or 1.
    for (const auto& name : ds.covariate_schema.names) {
        bool binary = true;
        for (const auto& s : ds.subjects) {
            auto it = s.covariates.find(name);
            if (it == s.covariates.end()) continue;
            if (it->second != 0.0 && it->second != 1.0) binary = false;
        }
        ds.covariate_schema.kinds[name] =
            binary ? CovariateKind::binary : CovariateKind::continuous;
    }
    return ds;
}

void write_csv(const PopulationDataset& ds, const std::string& path,
               const CsvSchema& schema) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write dataset file: " + path);
    out << schema.id_column << ',' << schema.time_column << ','
        << schema.amount_column << ',' << schema.dv_column;
    for (const auto& c : ds.covariate_schema.names) out << ',' << c;
    out << '\n';
    auto covs = [&](const Subject& s) {
        std::string t;
        for (const auto& c : ds.covariate_schema.names) {
            t += ',';
            auto it = s.covariates.find(c);
            if (it != s.covariates.end()) t += format_double(it->second);
        }
        return t;
    };
    for (const auto& s : ds.subjects) {
        for (const auto& d : s.doses)
            out << s.id << ',' << format_double(d.time) << ','
                << format_double(d.amount) << ',' << covs(s) << '\n';
        for (const auto& o : s.observations) {
            if (o.missing) continue;
            out << s.id << ',' << format_double(o.time) << ",,"
                << format_double(o.dv) << covs(s) << '\n';
        }
    }
}

PopulationDataset remove_subject(const PopulationDataset& ds,
                                 const std::string& id) {
    if (!ds.has_subject(id))
        throw std::runtime_error("remove_subject: unknown id '" + id + "'");
    PopulationDataset out;
    out.name = ds.name;
    out.covariate_schema = ds.covariate_schema;
    out.subjects.reserve(ds.subjects.size() - 1);
    for (const auto& s : ds.subjects)
        if (s.id != id) out.subjects.push_back(s);
    return out;
}

std::vector<std::vector<std::string>> partition_subjects(
    const PopulationDataset& ds, std::size_t k, std::uint64_t seed) {
    const std::size_t n = ds.n_subjects();
    if (k < 2 || k > n)
        throw std::invalid_argument("partition_subjects: fold count " +
                                    std::to_string(k) + " out of range [2, " +
                                    std::to_string(n) + "]");
    std::vector<std::string> ids;
    ids.reserve(n);
    for (const auto& s : ds.subjects) ids.push_back(s.id);
    std::sort(ids.begin(), ids.end());

    // Fisher-Yates with the project RNG; std::shuffle is not pinned across
    // standard library implementations.
    StreamRng rng(seed, 0, 0, /*stream=*/0);
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
        std::swap(ids[i], ids[j]);
    }

    std::vector<std::vector<std::string>> folds(k);
    for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(ids[i]);
    return folds;
}

void validate_dataset(const PopulationDataset& ds) {
    if (ds.n_subjects() < 2)
        throw std::runtime_error("dataset '" + ds.name +
                                 "': needs at least 2 subjects");
    std::set<std::string> seen;
    for (const auto& s : ds.subjects) {
        if (!seen.insert(s.id).second)
            throw std::runtime_error("dataset '" + ds.name +
                                     "': duplicate subject id " + s.id);
        for (const auto& o : s.observations)
            if (o.time < 0.0)
                throw std::runtime_error("subject " + s.id + ": negative time");
        for (const auto& d : s.doses)
            if (d.amount <= 0.0)
                throw std::runtime_error("subject " + s.id +
                                         ": non-positive dose amount");
        if (!std::is_sorted(s.observations.begin(), s.observations.end(),
                            [](const Observation& a, const Observation& b) {
                                return a.time < b.time;
                            }))
            throw std::runtime_error("subject " + s.id +
                                     ": observations not sorted by time");
    }
}

}  // namespace nlmecv
