#pragma once

#include <functional>
#include <vector>

#include "tromr/ag.hpp"

namespace tromr::testing {

using DMat = Mat<double>;

// Central-difference check of d(loss)/d(inputs) against the tape's backward
// pass. The builder receives fresh leaf handles for the current input values
// and returns a scalar loss handle.
struct GradCheck {
  double h = 1e-5;
  double tol = 1e-6;

  double max_rel_err(std::vector<DMat>& inputs,
                     const std::function<ag::Tape<double>::H(ag::Tape<double>&,
                                                             const std::vector<int>&)>& build) {
    const auto eval = [&]() {
      ag::Tape<double> t;
      std::vector<int> leaves;
      for (auto& m : inputs) leaves.push_back(t.leaf(m, static_cast<int>(leaves.size())));
      return t.val(build(t, leaves))(0, 0);
    };

    ag::Tape<double> t;
    std::vector<int> leaves;
    for (auto& m : inputs) leaves.push_back(t.leaf(m, static_cast<int>(leaves.size())));
    auto loss = build(t, leaves);
    std::vector<DMat> grads(inputs.size());
    t.backward(loss, &grads);

    double worst = 0.0;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      DMat& m = inputs[p];
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double orig = m.data()[i];
        m.data()[i] = orig + h;
        const double fp = eval();
        m.data()[i] = orig - h;
        const double fm = eval();
        m.data()[i] = orig;
        const double num = (fp - fm) / (2 * h);
        const double ana = grads[p].size() ? grads[p].data()[i] : 0.0;
        const double scale = std::max({std::abs(num), std::abs(ana), 1e-8});
        worst = std::max(worst, std::abs(num - ana) / scale);
      }
    }
    return worst;
  }
};

inline DMat random_mat(tromr::Rng& rng, int rows, int cols, double scale = 1.0) {
  DMat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
  return m;
}

}  // namespace tromr::testing
