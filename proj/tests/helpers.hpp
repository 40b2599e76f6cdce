#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <string>

#include "mupm/io.hpp"
#include "mupm/model.hpp"
#include "mupm/perturbation.hpp"
#include "mupm/types.hpp"

namespace mupm::test {

// Scratch directory under the build tree, emptied on creation.
inline fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::path(MUPM_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline ModelSpec linear_spec(std::vector<std::vector<double>> W, std::vector<std::vector<double>> V) {
  ModelSpec s;
  s.kind = ModelKind::kSyntheticLinear;
  s.W = Matrix::from_rows(W);
  s.V = Matrix::from_rows(V);
  s.c.assign(s.W.rows, 0.0);
  return s;
}

// One image element, one text token (id 1) whose single synonym (id 2) sits
// `gap` above it in feature space.
struct ScalarSetup {
  ModelSpec model;
  PerturbationSpec pspec;
  InputPair pair;
};

inline ScalarSetup scalar_setup(double a, double b, double sigma_i, double gap, double p,
                                double rho_in = 0.0) {
  ScalarSetup s;
  s.model = linear_spec({{a}}, {{b}});
  s.model.token_values = {{1, 0.0}, {2, gap}};
  s.pspec.image_noise_std = {sigma_i, sigma_i};
  s.pspec.text_swap_prob = p;
  s.pspec.synonym_table = {{1, {2}}};
  s.pspec.joint_correlation = rho_in;
  s.pair.id = "x";
  s.pair.image.shape = {1};
  s.pair.image.data = {0.0};
  s.pair.text = {1};
  return s;
}

inline int run_cli(const std::string& args) {
  const std::string cmd = std::string(MUPM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace mupm::test
