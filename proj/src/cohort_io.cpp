#include "rjm/cohort_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rjm/error.hpp"
#include "rjm/random.hpp"

namespace rjm {
namespace {

std::vector<std::string> split_csv(const std::string& raw) {
  std::string line = raw;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t");
    const auto e = cell.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_finite(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  return end != s.c_str() && *end == '\0' && std::isfinite(v);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;
};

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": empty file (a header row is required)");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  t.header = split_csv(line);
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv(line);
    if (cells.size() != t.header.size()) {
      throw ValidationError(path + ":" + std::to_string(n) + ": expected " + std::to_string(t.header.size()) +
                            " fields, found " + std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(n);
  }
  return t;
}

int require_column(const Table& t, const std::string& name, const std::string& path) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw ValidationError(path + ": missing required column '" + name + "'");
  return static_cast<int>(it - t.header.begin());
}

void throw_listing(const std::string& title, const std::vector<std::string>& items) {
  std::ostringstream msg;
  msg << title;
  const std::size_t shown = std::min<std::size_t>(items.size(), 20);
  for (std::size_t k = 0; k < shown; ++k) msg << "\n  " << items[k];
  if (items.size() > shown) msg << "\n  ... and " << items.size() - shown << " more";
  throw ValidationError(msg.str());
}

}  // namespace

void validate_record(const SubjectRecord& r, bool fitting) {
  const std::string who = "subject '" + r.id + "': ";
  if (r.id.empty()) throw ValidationError("subject with empty id");
  if (fitting && r.measurements.empty()) throw ValidationError(who + "has no measurements");
  double last = -1.0;
  for (const auto& m : r.measurements) {
    if (!std::isfinite(m.time) || !std::isfinite(m.value)) throw ValidationError(who + "non-finite measurement");
    if (m.time < 0.0) throw ValidationError(who + "measurement time must be >= 0");
    if (m.time < last) throw ValidationError(who + "measurement times must be nondecreasing");
    last = m.time;
  }
  if (r.event != 0 && r.event != 1) throw ValidationError(who + "event indicator must be 0 or 1");
  if (!(r.event_time > 0.0) || !std::isfinite(r.event_time)) throw ValidationError(who + "event time must be positive");
  if (fitting && last > r.event_time) throw ValidationError(who + "measurement after the event/censoring time");
  for (const auto& [name, value] : r.baseline) {
    if (!std::isfinite(value)) throw ValidationError(who + "non-finite covariate '" + name + "'");
  }
}

void validate_cohort(const std::vector<SubjectRecord>& records, bool fitting) {
  if (records.empty()) throw ValidationError("cohort is empty");
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.id).second) throw ValidationError("duplicate subject id '" + r.id + "'");
    validate_record(r, fitting);
  }
}

std::vector<SubjectRecord> read_cohort(const std::string& long_path, const std::string& surv_path,
                                       CohortReport* report) {
  const Table surv = read_table(surv_path);
  const int c_id = require_column(surv, "id", surv_path);
  const int c_time = require_column(surv, "event_time", surv_path);
  const int c_event = require_column(surv, "event", surv_path);

  std::vector<SubjectRecord> records;
  std::map<std::string, std::size_t> index;
  std::vector<std::string> problems;
  for (std::size_t k = 0; k < surv.rows.size(); ++k) {
    const auto& row = surv.rows[k];
    const std::string where = surv_path + ":" + std::to_string(surv.line_numbers[k]);
    SubjectRecord r;
    r.id = row[c_id];
    if (r.id.empty()) problems.push_back(where + ": empty id");
    double t = 0.0, e = 0.0;
    if (!parse_finite(row[c_time], t)) problems.push_back(where + ": event_time is not a finite number");
    else if (!(t > 0.0)) problems.push_back(where + ": event_time must be positive");
    if (!parse_finite(row[c_event], e) || (e != 0.0 && e != 1.0)) problems.push_back(where + ": event must be 0 or 1");
    r.event_time = t;
    r.event = static_cast<int>(e);
    for (std::size_t c = 0; c < surv.header.size(); ++c) {
      if (static_cast<int>(c) == c_id || static_cast<int>(c) == c_time || static_cast<int>(c) == c_event) continue;
      double v = 0.0;
      if (!parse_finite(row[c], v)) problems.push_back(where + ": covariate '" + surv.header[c] + "' is not a finite number");
      r.baseline[surv.header[c]] = v;
    }
    if (index.count(r.id)) problems.push_back(where + ": duplicate id '" + r.id + "'");
    index[r.id] = records.size();
    records.push_back(std::move(r));
  }
  if (!problems.empty()) throw_listing("invalid survival file:", problems);

  const Table lon = read_table(long_path);
  const int l_id = require_column(lon, "id", long_path);
  const int l_time = require_column(lon, "time", long_path);
  const int l_value = require_column(lon, "value", long_path);
  std::set<std::pair<std::string, double>> seen;
  std::vector<std::string> duplicates;
  for (std::size_t k = 0; k < lon.rows.size(); ++k) {
    const auto& row = lon.rows[k];
    const std::string where = long_path + ":" + std::to_string(lon.line_numbers[k]);
    double t = 0.0, v = 0.0;
    if (!parse_finite(row[l_time], t)) { problems.push_back(where + ": time is not a finite number"); continue; }
    if (!parse_finite(row[l_value], v)) { problems.push_back(where + ": value is not a finite number"); continue; }
    if (t < 0.0) { problems.push_back(where + ": time must be >= 0"); continue; }
    auto it = index.find(row[l_id]);
    if (it == index.end()) {
      problems.push_back(where + ": id '" + row[l_id] + "' is not in the survival file");
      continue;
    }
    if (!seen.insert({row[l_id], t}).second) {
      duplicates.push_back(where + ": (" + row[l_id] + ", " + row[l_time] + ")");
      continue;
    }
    records[it->second].measurements.push_back({t, v});
  }
  if (!duplicates.empty()) throw_listing("duplicate (id, time) rows:", duplicates);
  if (!problems.empty()) throw_listing("invalid longitudinal file:", problems);

  int empty = 0;
  for (auto& r : records) {
    std::stable_sort(r.measurements.begin(), r.measurements.end(),
                     [](const Measurement& a, const Measurement& b) { return a.time < b.time; });
    if (r.measurements.empty()) ++empty;
  }
  if (report) {
    report->subjects = static_cast<int>(records.size());
    report->longitudinal_rows = static_cast<int>(lon.rows.size());
    report->survival_rows = static_cast<int>(surv.rows.size());
    report->subjects_without_measurements = empty;
  }
  return records;
}

void write_cohort(const std::vector<SubjectRecord>& records, const std::string& long_path,
                  const std::string& surv_path) {
  std::set<std::string> covariates;
  for (const auto& r : records) {
    for (const auto& [name, v] : r.baseline) covariates.insert(name);
  }
  std::ofstream surv(surv_path);
  if (!surv) throw ValidationError("cannot write '" + surv_path + "'");
  surv << "id,event_time,event";
  for (const auto& c : covariates) surv << ',' << c;
  surv << '\n';
  for (const auto& r : records) {
    surv << r.id << ',' << fmt(r.event_time) << ',' << r.event;
    for (const auto& c : covariates) {
      auto it = r.baseline.find(c);
      if (it == r.baseline.end()) throw ValidationError("subject '" + r.id + "' lacks covariate '" + c + "'");
      surv << ',' << fmt(it->second);
    }
    surv << '\n';
  }
  std::ofstream lon(long_path);
  if (!lon) throw ValidationError("cannot write '" + long_path + "'");
  lon << "id,time,value\n";
  for (const auto& r : records) {
    for (const auto& m : r.measurements) lon << r.id << ',' << fmt(m.time) << ',' << fmt(m.value) << '\n';
  }
}

std::pair<std::vector<SubjectRecord>, std::vector<SubjectRecord>> split_cohort(
    const std::vector<SubjectRecord>& records, double learning_fraction, std::uint64_t seed) {
  if (!(learning_fraction > 0.0 && learning_fraction < 1.0)) {
    throw ValidationError("learning fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(records.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  Rng rng = make_rng(seed, 0x5b1175ULL);
  for (std::size_t k = order.size(); k > 1; --k) {
    const std::size_t j = static_cast<std::size_t>(uniform01(rng) * k);
    std::swap(order[k - 1], order[std::min(j, k - 1)]);
  }
  const std::size_t n_learn = static_cast<std::size_t>(std::llround(learning_fraction * records.size()));
  std::vector<std::size_t> learn(order.begin(), order.begin() + n_learn), valid(order.begin() + n_learn, order.end());
  std::sort(learn.begin(), learn.end());
  std::sort(valid.begin(), valid.end());
  std::pair<std::vector<SubjectRecord>, std::vector<SubjectRecord>> out;
  for (auto k : learn) out.first.push_back(records[k]);
  for (auto k : valid) out.second.push_back(records[k]);
  return out;
}

}  // namespace rjm
