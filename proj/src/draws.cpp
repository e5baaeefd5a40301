#include "rjm/draws.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "rjm/error.hpp"

namespace rjm {
namespace {

std::string indexed(const std::string& base, int a) { return base + "[" + std::to_string(a) + "]"; }
std::string indexed(const std::string& base, int a, int b) {
  return base + "[" + std::to_string(a) + "," + std::to_string(b) + "]";
}

const char* kTrailing[] = {"lp__", "divergent__", "treedepth__", "stepsize__", "energy__"};

// Splits one CSV record; double-quoted cells may contain commas.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  out.push_back(cell);
  return out;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + '"';
}

double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw ValidationError(where + ": not a number '" + s + "'");
  return v;
}

}  // namespace

std::vector<std::string> global_columns(const ModelSpec& spec) {
  std::vector<std::string> out;
  const int p = spec.num_fixed(), q = spec.num_random(), r = spec.num_covariates();
  for (int k = 1; k <= p; ++k) out.push_back(indexed("alpha", k));
  for (int k = 1; k <= q; ++k) out.push_back(indexed("R", k));
  for (int a = 1; a <= q; ++a) {
    for (int b = 1; b <= a; ++b) out.push_back(indexed("L_Omega", a, b));
  }
  out.push_back("sigma");
  if (has_effect_mixing(spec.regime)) out.push_back("phi");
  if (has_error_mixing(spec.regime)) out.push_back("delta");
  out.push_back("log_lambda");
  out.push_back("log_nu");
  for (int k = 1; k <= r; ++k) out.push_back(indexed("omega", k));
  if (spec.link.current_value) out.push_back("eta1");
  if (spec.link.slope) out.push_back("eta2");
  return out;
}

void append_globals(const ParameterState& s, const ModelSpec& spec, std::vector<double>& out) {
  for (int k = 0; k < s.alpha.size(); ++k) out.push_back(s.alpha[k]);
  for (int k = 0; k < s.scales.size(); ++k) out.push_back(s.scales[k]);
  for (int a = 0; a < s.corr_cholesky.rows(); ++a) {
    for (int b = 0; b <= a; ++b) out.push_back(s.corr_cholesky(a, b));
  }
  out.push_back(s.sigma);
  if (has_effect_mixing(spec.regime)) out.push_back(s.phi);
  if (has_error_mixing(spec.regime)) out.push_back(s.delta);
  out.push_back(s.log_lambda);
  out.push_back(s.log_nu);
  for (int k = 0; k < s.omega.size(); ++k) out.push_back(s.omega[k]);
  if (spec.link.current_value) out.push_back(s.eta_value);
  if (spec.link.slope) out.push_back(s.eta_slope);
}

int PosteriorDraws::num_chains() const {
  return static_cast<int>(std::set<int>(chain.begin(), chain.end()).size());
}

int PosteriorDraws::column(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
}

std::vector<double> PosteriorDraws::get(const std::string& name) const {
  const int c = column(name);
  if (c < 0) throw ValidationError("draws: no column '" + name + "'");
  std::vector<double> out(rows());
  for (int i = 0; i < rows(); ++i) out[i] = values(i, c);
  return out;
}

std::vector<std::vector<double>> PosteriorDraws::by_chain(const std::string& name) const {
  const int c = column(name);
  if (c < 0) throw ValidationError("draws: no column '" + name + "'");
  std::vector<int> labels(chain);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  std::vector<std::vector<double>> out(labels.size());
  for (int i = 0; i < rows(); ++i) {
    const auto pos = std::lower_bound(labels.begin(), labels.end(), chain[i]) - labels.begin();
    out[pos].push_back(values(i, c));
  }
  return out;
}

ParameterState PosteriorDraws::state(int row, const ModelSpec& spec) const {
  ParameterState s = ParameterState::zeros(spec);
  auto v = [&](const std::string& name) {
    const int c = column(name);
    if (c < 0) throw ValidationError("draws: missing column '" + name + "' required by the model");
    return values(row, c);
  };
  const int p = spec.num_fixed(), q = spec.num_random(), r = spec.num_covariates();
  for (int k = 0; k < p; ++k) s.alpha[k] = v(indexed("alpha", k + 1));
  for (int k = 0; k < q; ++k) s.scales[k] = v(indexed("R", k + 1));
  for (int a = 0; a < q; ++a) {
    for (int b = 0; b <= a; ++b) s.corr_cholesky(a, b) = v(indexed("L_Omega", a + 1, b + 1));
  }
  s.sigma = v("sigma");
  if (has_effect_mixing(spec.regime)) s.phi = v("phi");
  if (has_error_mixing(spec.regime)) s.delta = v("delta");
  s.log_lambda = v("log_lambda");
  s.log_nu = v("log_nu");
  for (int k = 0; k < r; ++k) s.omega[k] = v(indexed("omega", k + 1));
  if (spec.link.current_value) s.eta_value = v("eta1");
  if (spec.link.slope) s.eta_slope = v("eta2");
  return s;
}

void PosteriorDraws::add_derived(const ModelSpec& spec) {
  const int q = spec.num_random();
  std::vector<std::string> extra;
  for (int a = 1; a <= q; ++a) {
    for (int b = 1; b <= q; ++b) extra.push_back(indexed("Sigma", a, b));
  }
  extra.push_back("sigma2");
  for (const auto& name : extra) {
    if (has(name)) return;
  }
  const int base = static_cast<int>(columns.size());
  values.conservativeResize(Eigen::NoChange, base + static_cast<int>(extra.size()));
  for (int i = 0; i < rows(); ++i) {
    const ParameterState s = state(i, spec);
    const Eigen::MatrixXd cov = s.covariance();
    int c = base;
    for (int a = 0; a < q; ++a) {
      for (int b = 0; b < q; ++b) values(i, c++) = cov(a, b);
    }
    values(i, c) = s.sigma * s.sigma;
  }
  columns.insert(columns.end(), extra.begin(), extra.end());
}

void write_chain_csv(const PosteriorDraws& draws, int chain, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  for (std::size_t c = 0; c < draws.columns.size(); ++c) out << csv_cell(draws.columns[c]) << ',';
  for (int k = 0; k < 5; ++k) out << kTrailing[k] << (k < 4 ? ',' : '\n');
  char buf[32];
  for (int i = 0; i < draws.rows(); ++i) {
    if (draws.chain[i] != chain) continue;
    for (int c = 0; c < draws.values.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", draws.values(i, c));
      out << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", draws.log_density[i]);
    out << buf << ',' << draws.divergent[i] << ',' << draws.tree_depth[i] << ',';
    std::snprintf(buf, sizeof buf, "%.17g", draws.stepsize[i]);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", draws.energy_error[i]);
    out << buf << '\n';
  }
}

void read_chain_csv(const std::string& path, int chain, PosteriorDraws& draws) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": empty file");
  std::vector<std::string> header = split_csv(line);
  if (header.size() < 5) throw ValidationError(path + ": header too short");
  for (int k = 0; k < 5; ++k) {
    if (header[header.size() - 5 + k] != kTrailing[k]) throw ValidationError(path + ": missing " + kTrailing[k]);
  }
  header.resize(header.size() - 5);
  if (draws.columns.empty()) {
    draws.columns = header;
  } else if (draws.columns != header) {
    throw ValidationError(path + ": columns differ from the other chains");
  }
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size() + 5) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": wrong number of fields");
    }
    std::vector<double> row;
    for (const auto& cell : cells) row.push_back(parse_double(cell, path + ":" + std::to_string(line_no)));
    rows.push_back(std::move(row));
  }
  const int base = draws.rows();
  const int ncol = static_cast<int>(header.size());
  draws.values.conservativeResize(base + static_cast<int>(rows.size()), ncol);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int c = 0; c < ncol; ++c) draws.values(base + i, c) = rows[i][c];
    draws.chain.push_back(chain);
    draws.log_density.push_back(rows[i][ncol]);
    draws.divergent.push_back(static_cast<int>(rows[i][ncol + 1]));
    draws.tree_depth.push_back(static_cast<int>(rows[i][ncol + 2]));
    draws.stepsize.push_back(rows[i][ncol + 3]);
    draws.energy_error.push_back(rows[i][ncol + 4]);
  }
}

std::string digest(const PosteriorDraws& draws) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= bytes[k];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& c : draws.columns) mix(c.data(), c.size());
  for (int i = 0; i < draws.rows(); ++i) {
    for (int c = 0; c < draws.values.cols(); ++c) {
      const double v = draws.values(i, c);
      mix(&v, sizeof v);
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rjm
