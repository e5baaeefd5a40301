#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "rjm/types.hpp"

namespace rjm {

// Retained draws on the constrained scale, one row per (chain, iteration).
// Global columns are named alpha[k], R[k], L_Omega[a,b] (lower triangle),
// sigma, phi, delta, log_lambda, log_nu, omega[k], eta1, eta2; optional
// latent columns B[i,k], V[i], W[i,j] use 1-based subject positions.
struct PosteriorDraws {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;
  std::vector<int> chain;  // 1-based chain label per row
  std::vector<double> log_density;
  std::vector<int> divergent;
  std::vector<int> tree_depth;
  std::vector<double> stepsize;
  std::vector<double> energy_error;

  int rows() const { return static_cast<int>(values.rows()); }
  int num_chains() const;
  int column(const std::string& name) const;  // -1 when absent
  bool has(const std::string& name) const { return column(name) >= 0; }
  std::vector<double> get(const std::string& name) const;
  std::vector<std::vector<double>> by_chain(const std::string& name) const;

  // Global parameters of one row (latents left empty).
  ParameterState state(int row, const ModelSpec& spec) const;

  // Sigma[a,b] = (R Omega R)[a,b] and sigma2 for every row.
  void add_derived(const ModelSpec& spec);
};

// Global column names for a spec, in storage order.
std::vector<std::string> global_columns(const ModelSpec& spec);

// Appends the globals of `state` in global_columns order.
void append_globals(const ParameterState& state, const ModelSpec& spec, std::vector<double>& out);

// One CSV per chain (header = column names plus lp__, divergent__,
// treedepth__, stepsize__, energy__), values at full precision.
void write_chain_csv(const PosteriorDraws& draws, int chain, const std::string& path);
// Reads one chain file; rows are appended to `draws` with the given label.
void read_chain_csv(const std::string& path, int chain, PosteriorDraws& draws);

// FNV-1a digest of the global draw values (order-sensitive).
std::string digest(const PosteriorDraws& draws);

}  // namespace rjm
