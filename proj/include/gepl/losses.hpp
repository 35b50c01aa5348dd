#pragma once

// Partition losses computed from contingency tables. Every loss here has
// the decomposable form
//
//   L = f0( sum_gh f1(n_gh), sum_g f2(n_g), sum_h f3(n_h) )
//
// which is what makes the O(1) incremental update in the optimizer work.
// Entropies are in bits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "gepl/error.hpp"
#include "gepl/partition.hpp"

namespace gepl {

enum class LossKind { Binder, VI, NVI, NID, ZeroOne, Custom };

inline std::string_view loss_name(LossKind k) {
  switch (k) {
    case LossKind::Binder: return "binder";
    case LossKind::VI: return "vi";
    case LossKind::NVI: return "nvi";
    case LossKind::NID: return "nid";
    case LossKind::ZeroOne: return "zeroone";
    case LossKind::Custom: return "custom";
  }
  return "unknown";
}

inline std::optional<LossKind> parse_loss_kind(std::string_view s) {
  for (LossKind k : {LossKind::Binder, LossKind::VI, LossKind::NVI, LossKind::NID, LossKind::ZeroOne}) {
    if (loss_name(k) == s) return k;
  }
  return std::nullopt;
}

using CountFn = std::function<double(std::size_t)>;
using CombineFn = std::function<double(double, double, double)>;

struct LossSpec {
  LossKind kind = LossKind::VI;
  // Only used when kind == Custom.
  CombineFn f0;
  CountFn f1, f2, f3;

  static LossSpec builtin(LossKind k) {
    if (k == LossKind::Custom) throw InvalidArgument("custom losses need their component functions");
    return LossSpec{k, {}, {}, {}, {}};
  }

  /// f1 acts on cell counts, f2 on row sums, f3 on column sums. Each must be
  /// finite at 0 so that empty groups are harmless.
  static LossSpec custom(CombineFn f0, CountFn f1, CountFn f2, CountFn f3) {
    for (const CountFn* f : {&f1, &f2, &f3}) {
      if (!*f || !std::isfinite((*f)(0))) throw InvalidArgument("custom loss component must be finite at 0");
    }
    if (!f0) throw InvalidArgument("custom loss needs a combiner");
    return LossSpec{LossKind::Custom, std::move(f0), std::move(f1), std::move(f2), std::move(f3)};
  }
};

namespace detail {

inline double xlog2x(double x) { return x > 0.0 ? x * std::log2(x) : 0.0; }

// Rounding residue allowed on mutual information before clamping.
inline constexpr double kInfoTolerance = 1e-12;

inline double normalized_info_loss(double info, double denom) {
  if (denom <= kInfoTolerance) return 0.0;
  return std::clamp(1.0 - std::max(info, 0.0) / denom, 0.0, 1.0);
}

}  // namespace detail

inline double entropy(std::span<const std::size_t> sizes, std::size_t n) {
  if (n == 0) throw InvalidArgument("entropy of an empty partition is undefined");
  double h = 0.0;
  const double dn = static_cast<double>(n);
  for (std::size_t s : sizes) h -= detail::xlog2x(static_cast<double>(s) / dn);
  return h + 0.0;
}

inline double joint_entropy(const ContingencyTable& t) { return entropy(t.counts(), t.total()); }

inline double mutual_information(const ContingencyTable& t) {
  const double info = entropy(t.row_sums(), t.total()) + entropy(t.col_sums(), t.total()) - joint_entropy(t);
  return info < 0.0 && info > -detail::kInfoTolerance ? 0.0 : info;
}

inline double loss_binder(const ContingencyTable& t) {
  double rows = 0.0, cols = 0.0, cells = 0.0;
  for (std::size_t n : t.row_sums()) rows += static_cast<double>(n) * static_cast<double>(n);
  for (std::size_t n : t.col_sums()) cols += static_cast<double>(n) * static_cast<double>(n);
  for (std::size_t n : t.counts()) cells += static_cast<double>(n) * static_cast<double>(n);
  return 0.5 * rows + 0.5 * cols - cells;
}

inline double loss_vi(const ContingencyTable& t) {
  const double v = 2.0 * joint_entropy(t) - entropy(t.row_sums(), t.total()) - entropy(t.col_sums(), t.total());
  return std::max(v, 0.0);
}

inline double loss_nvi(const ContingencyTable& t) {
  return detail::normalized_info_loss(mutual_information(t), joint_entropy(t));
}

inline double loss_nid(const ContingencyTable& t) {
  const double hmax = std::max(entropy(t.row_sums(), t.total()), entropy(t.col_sums(), t.total()));
  return detail::normalized_info_loss(mutual_information(t), hmax);
}

inline double loss_zero_one(const Partition& a, const Partition& z) { return equivalent(a, z) ? 0.0 : 1.0; }

/// Expresses a built-in loss through (f0, f1, f2, f3) for N items. The N
/// normalizations live in f0.
inline LossSpec decomposable_form(LossKind kind, std::size_t n) {
  const double dn = static_cast<double>(n);
  const double log2n = std::log2(dn);
  CountFn square = [](std::size_t c) { return static_cast<double>(c) * static_cast<double>(c); };
  CountFn nlogn = [](std::size_t c) { return detail::xlog2x(static_cast<double>(c)); };
  CountFn nonzero = [](std::size_t c) { return c > 0 ? 1.0 : 0.0; };
  switch (kind) {
    case LossKind::Binder:
      return LossSpec::custom([](double s1, double s2, double s3) { return 0.5 * s2 + 0.5 * s3 - s1; }, square, square,
                              square);
    case LossKind::VI:
      return LossSpec::custom(
          [dn](double s1, double s2, double s3) { return std::max((s2 + s3 - 2.0 * s1) / dn, 0.0); }, nlogn, nlogn,
          nlogn);
    case LossKind::NVI:
      return LossSpec::custom(
          [dn, log2n](double s1, double s2, double s3) {
            return detail::normalized_info_loss(log2n - (s2 + s3 - s1) / dn, log2n - s1 / dn);
          },
          nlogn, nlogn, nlogn);
    case LossKind::NID:
      return LossSpec::custom(
          [dn, log2n](double s1, double s2, double s3) {
            const double hmax = std::max(log2n - s2 / dn, log2n - s3 / dn);
            return detail::normalized_info_loss(log2n - (s2 + s3 - s1) / dn, hmax);
          },
          nlogn, nlogn, nlogn);
    case LossKind::ZeroOne:
      // Equivalent iff the number of non-empty cells equals both group counts.
      return LossSpec::custom([](double s1, double s2, double s3) { return (s1 == s2 && s1 == s3) ? 0.0 : 1.0; },
                              nonzero, nonzero, nonzero);
    case LossKind::Custom:
      break;
  }
  throw InvalidArgument("custom losses have no built-in decomposable form");
}

/// f0(sum f1(n_gh), sum f2(n_g), sum f3(n_h)) over the table's cells and
/// marginals. Built-in kinds go through decomposable_form.
inline double eval_decomposable(const LossSpec& spec, const ContingencyTable& t) {
  const LossSpec form = spec.kind == LossKind::Custom ? spec : decomposable_form(spec.kind, t.total());
  double s1 = 0.0, s2 = 0.0, s3 = 0.0;
  for (std::size_t g = 0; g < t.rows(); ++g) {
    for (std::size_t h = 0; h < t.cols(); ++h) {
      const double v = form.f1(t.at(g, h));
      if (!std::isfinite(v)) {
        throw NumericalError("f1 is not finite at cell (" + std::to_string(g) + "," + std::to_string(h) +
                             ") with count " + std::to_string(t.at(g, h)));
      }
      s1 += v;
    }
  }
  for (std::size_t g = 0; g < t.rows(); ++g) {
    const double v = form.f2(t.row_sum(g));
    if (!std::isfinite(v)) throw NumericalError("f2 is not finite at row " + std::to_string(g));
    s2 += v;
  }
  for (std::size_t h = 0; h < t.cols(); ++h) {
    const double v = form.f3(t.col_sum(h));
    if (!std::isfinite(v)) throw NumericalError("f3 is not finite at column " + std::to_string(h));
    s3 += v;
  }
  const double out = form.f0(s1, s2, s3);
  if (!std::isfinite(out)) throw NumericalError("f0 returned a non-finite loss");
  return out;
}

/// Direct evaluation of any loss between two partitions.
inline double loss_value(const LossSpec& spec, const Partition& a, const Partition& z) {
  switch (spec.kind) {
    case LossKind::ZeroOne: return loss_zero_one(a, z);
    case LossKind::Binder: return loss_binder(contingency(a, z));
    case LossKind::VI: return loss_vi(contingency(a, z));
    case LossKind::NVI: return loss_nvi(contingency(a, z));
    case LossKind::NID: return loss_nid(contingency(a, z));
    case LossKind::Custom: return eval_decomposable(spec, contingency(a, z));
  }
  return 0.0;
}

}  // namespace gepl
