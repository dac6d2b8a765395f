// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "m3s/errors.hpp"

namespace m3s::ad {

std::string GradcheckReport::summary() const {
  std::ostringstream os;
  os << "gradcheck max_rel_error=" << max_rel_error << " tolerance=" << tolerance;
  for (const auto& e : entries) {
    os << "\n  " << e.name << ": rel=" << e.max_rel_error << " abs=" << e.max_abs_error
       << " worst=" << e.worst_index << " flagged=" << e.flagged;
  }
  return os.str();
}

namespace {

double evaluate(const std::function<Tensor<double>()>& fn) {
  NoTapeScope<double> no_tape;
  const Tensor<double> y = fn();
  if (y.size() != 1) throw ConfigError("gradcheck: function must return a scalar, got " + to_string(y.shape()));
  return y.item();
}

}  // namespace

GradcheckReport gradcheck(const std::function<Tensor<double>()>& fn, std::vector<NamedParam> params, double eps,
                          double tolerance) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw ConfigError("gradcheck: epsilon must lie in [1e-6, 1e-3]");

  const double first = evaluate(fn);
  const double second = evaluate(fn);
  if (first != second) throw ContractViolation("gradcheck: function is not deterministic");

  for (auto& p : params) p.tensor.zero_grad();
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    const Tensor<double> loss = fn();
    if (loss.item() != first) throw ContractViolation("gradcheck: taped evaluation differs from untaped one");
    tape.backward(loss);
  }

  GradcheckReport report;
  report.tolerance = tolerance;
  for (auto& p : params) {
    if (!p.tensor.requires_grad()) throw ConfigError("gradcheck: '" + p.name + "' is not a parameter");
    GradcheckEntry entry;
    entry.name = p.name;
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    auto values = p.tensor.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = evaluate(fn);
      values[i] = saved - eps;
      const double minus = evaluate(fn);
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double abs_err = std::abs(analytic[i] - numeric);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), kGradcheckScaleFloor});
      const double rel = abs_err / denom;
      if (rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
      }
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      if (rel > tolerance) ++entry.flagged;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  for (auto& p : params) p.tensor.zero_grad();
  return report;
}

}  // namespace m3s::ad
