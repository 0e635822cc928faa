#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bellsim/station.hpp"
#include "bellsim/units.hpp"

namespace bellsim {

class NoPeakError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Counts of B-minus-A time differences. Bin k covers
// [lo + k*width, lo + (k+1)*width), in picoseconds.
struct Histogram {
  double lo = 0.0;
  double width = 1.0;
  std::vector<std::uint32_t> counts;

  double center(std::size_t k) const { return lo + (static_cast<double>(k) + 0.5) * width; }

  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

// Accumulates every difference tB - tA falling in [lo, lo + n*width) with a
// two-pointer sweep; cost is linear in the number of accumulated differences.
inline Histogram difference_histogram(std::span<const TimeTag> a, std::span<const TimeTag> b,
                                      double lo, double width, std::size_t nbins) {
  if (a.empty() || b.empty()) throw std::invalid_argument("difference histogram: empty stream");
  if (!(width > 0.0) || nbins == 0) throw std::invalid_argument("difference histogram: bad binning");
  Histogram h{lo, width, std::vector<std::uint32_t>(nbins, 0)};
  const double hi = lo + width * static_cast<double>(nbins);
  const auto lo_ps = static_cast<std::int64_t>(std::ceil(lo));
  std::size_t first = 0;
  for (const auto& ta : a) {
    const std::int64_t t = ta.timestamp.count();
    while (first < b.size() && b[first].timestamp.count() - t < lo_ps) ++first;
    for (std::size_t j = first; j < b.size(); ++j) {
      const double d = static_cast<double>(b[j].timestamp.count() - t);
      if (d >= hi) break;
      const auto k = static_cast<std::size_t>(std::floor((d - lo) / width));
      if (k < nbins) ++h.counts[k];
    }
  }
  return h;
}

// Histogram over +-search_range with a bin centred on zero difference.
inline Histogram offset_histogram(std::span<const TimeTag> a, std::span<const TimeTag> b,
                                  double search_range, double bin_width) {
  if (!(search_range > 0.0 && bin_width > 0.0))
    throw std::invalid_argument("offset histogram: range and bin width must be > 0");
  const double bin = bin_width * kPicosecondsPerSecond;
  const auto half = static_cast<std::size_t>(std::ceil(search_range * kPicosecondsPerSecond / bin));
  return difference_histogram(a, b, -(static_cast<double>(half) + 0.5) * bin, bin, 2 * half + 1);
}

struct OffsetOptions {
  double coarse_range = 1e-3;
  double coarse_bin = 1e-9;
  double refine_bin = 75e-12;
  double refine_half_width = 10e-9;
  double peak_exclusion = 20e-9;  // half-width kept out of the background estimate
  double min_peak_ratio = 5.0;    // peak / background
  double false_alarm = 1e-3;      // chance that pure background fakes the coarse peak
};

struct OffsetEstimate {
  double offset = 0.0;           // s, tB - tA of true coincidences
  double peak_height = 0.0;      // counts in the highest refined bin
  double background_mean = 0.0;  // counts per refined bin
  double snr = 0.0;
  double fwhm = 0.0;  // s
  double coarse_peak = 0.0;      // s

  Picoseconds offset_ticks() const { return from_seconds(offset); }
};

namespace detail {

// Smallest k such that nbins * P(Poisson(mu) >= k) < alpha.
inline double poisson_peak_threshold(double mu, double nbins, double alpha) {
  if (mu <= 0.0) return 1.0;
  double pmf = std::exp(-mu);
  double tail = 1.0;  // P(X >= 0)
  for (int k = 0; k < 100000; ++k) {
    if (nbins * tail < alpha) return k;
    tail -= pmf;
    if (tail < 0.0) tail = 0.0;
    pmf *= mu / (k + 1);
  }
  return std::numeric_limits<double>::infinity();
}

// Interpolated half-maximum crossing, walking outward from `peak` by `step`.
inline double half_max_crossing(const Histogram& h, const std::vector<double>& net, std::size_t peak,
                                int step, double half) {
  auto k = static_cast<std::ptrdiff_t>(peak);
  const auto n = static_cast<std::ptrdiff_t>(net.size());
  while (true) {
    const auto next = k + step;
    if (next < 0 || next >= n) return h.center(static_cast<std::size_t>(k)) + step * 0.5 * h.width;
    if (net[static_cast<std::size_t>(next)] < half) {
      const double y0 = net[static_cast<std::size_t>(k)];
      const double y1 = net[static_cast<std::size_t>(next)];
      const double frac = (y0 - half) / (y0 - y1);
      return h.center(static_cast<std::size_t>(k)) + step * frac * h.width;
    }
    k = next;
  }
}

}  // namespace detail

// Two-pass offset search: coarse histogram peak, then background-subtracted
// centroid of a fine histogram around it.
inline OffsetEstimate recover_offset(std::span<const TimeTag> a, std::span<const TimeTag> b,
                                     const OffsetOptions& opt = {}) {
  const Histogram coarse = offset_histogram(a, b, opt.coarse_range, opt.coarse_bin);
  const std::size_t kmax = coarse.argmax();
  const double c_peak = coarse.center(kmax);

  const double excl = opt.peak_exclusion * kPicosecondsPerSecond;
  double bg_sum = 0.0;
  std::size_t bg_bins = 0;
  for (std::size_t k = 0; k < coarse.counts.size(); ++k) {
    if (std::abs(coarse.center(k) - c_peak) <= excl) continue;
    bg_sum += coarse.counts[k];
    ++bg_bins;
  }
  const double bg_coarse = bg_bins ? bg_sum / static_cast<double>(bg_bins) : 0.0;
  const double peak_coarse = coarse.counts[kmax];
  const double needed =
      std::max(opt.min_peak_ratio * bg_coarse,
               detail::poisson_peak_threshold(bg_coarse, static_cast<double>(coarse.counts.size()),
                                              opt.false_alarm));
  if (peak_coarse < needed || peak_coarse == 0.0)
    throw NoPeakError("no coincidence peak: highest bin " + std::to_string(peak_coarse) +
                      " counts vs background " + std::to_string(bg_coarse) + " per bin");

  // Fine bins centred on multiples of the fine width so quantized tags do
  // not straddle bin edges; symmetric about the coarse peak.
  const double rb = opt.refine_bin * kPicosecondsPerSecond;
  const double center0 = std::round(c_peak / rb) * rb;
  const auto half_bins = static_cast<std::size_t>(std::floor(opt.refine_half_width * kPicosecondsPerSecond / rb));
  const auto nbins = 2 * half_bins + 1;
  const Histogram fine =
      difference_histogram(a, b, center0 - (static_cast<double>(half_bins) + 0.5) * rb, rb, nbins);
  const double bg = bg_coarse * rb / coarse.width;

  std::vector<double> net(nbins);
  for (std::size_t k = 0; k < nbins; ++k) net[k] = fine.counts[k] - bg;
  const std::size_t fpeak = fine.argmax();
  auto center_of = [&](std::size_t k) {
    return center0 + (static_cast<double>(k) - static_cast<double>(half_bins)) * rb;
  };

  OffsetEstimate est;
  est.coarse_peak = c_peak / kPicosecondsPerSecond;
  est.peak_height = fine.counts[fpeak];
  est.background_mean = bg;
  est.snr = bg > 0.0 ? est.peak_height / bg : std::numeric_limits<double>::infinity();
  const double half = net[fpeak] / 2.0;
  const double left = detail::half_max_crossing(fine, net, fpeak, -1, half);
  const double right = detail::half_max_crossing(fine, net, fpeak, +1, half);
  est.fwhm = (right - left) / kPicosecondsPerSecond;

  // Background-subtracted centroid over +-2 FWHM around the fine peak.
  // Mirror bins are paired so a flat background cancels exactly.
  const auto reach = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(2.0 * (right - left) / rb)));
  const std::size_t span = std::min({reach, fpeak, nbins - 1 - fpeak});
  double w_sum = net[fpeak], x_sum = 0.0;
  for (std::size_t j = 1; j <= span; ++j) {
    w_sum += net[fpeak + j] + net[fpeak - j];
    x_sum += static_cast<double>(j) * (net[fpeak + j] - net[fpeak - j]);
  }
  if (!(w_sum > 0.0)) throw NoPeakError("no coincidence peak in refined window");
  est.offset = (center_of(fpeak) + rb * x_sum / w_sum) / kPicosecondsPerSecond;
  return est;
}

// The 16 coincidence counts C_ij(a, b); a, b are setting bits and i, j
// detector outputs (0 = "+", 1 = "-").
struct CoincidenceTable {
  std::array<std::uint64_t, 16> counts{};

  static constexpr std::size_t index(int a, int b, int i, int j) {
    return static_cast<std::size_t>(((a * 2 + b) * 2 + i) * 2 + j);
  }
  std::uint64_t& at(int a, int b, int i, int j) { return counts[index(a, b, i, j)]; }
  std::uint64_t at(int a, int b, int i, int j) const { return counts[index(a, b, i, j)]; }
  std::uint64_t& at(int a, int b, Outcome i, Outcome j) { return at(a, b, int(i), int(j)); }
  std::uint64_t at(int a, int b, Outcome i, Outcome j) const { return at(a, b, int(i), int(j)); }

  std::uint64_t total(int a, int b) const {
    return at(a, b, 0, 0) + at(a, b, 0, 1) + at(a, b, 1, 0) + at(a, b, 1, 1);
  }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }

  CoincidenceTable& operator+=(const CoincidenceTable& o) {
    for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += o.counts[k];
    return *this;
  }
  bool operator==(const CoincidenceTable&) const = default;
};

struct MatchedPair {
  std::size_t a = 0;
  std::size_t b = 0;
  std::int64_t delta = 0;  // ps, (tB - offset) - tA
};

enum class MatchMode { Nearest, AllPairs };

struct MatchResult {
  CoincidenceTable table;
  std::vector<MatchedPair> pairs;
};

// Coincidences on the offset-corrected axis: a pair qualifies when
// |tA - (tB - offset)| <= window/2 (closed window). In Nearest mode each
// tag is used at most once; candidates are taken in order of increasing
// |dt|, ties to the earlier event, which makes the result independent of
// which stream is called A.
inline MatchResult match_coincidences(std::span<const TimeTag> a, std::span<const TimeTag> b,
                                      Picoseconds offset, Picoseconds window,
                                      MatchMode mode = MatchMode::Nearest) {
  if (window.count() < 0) throw std::invalid_argument("coincidence window must be >= 0");
  const std::int64_t off = offset.count();
  const std::int64_t w = window.count();

  struct Candidate {
    std::int64_t abs_delta;
    std::int64_t earliest;
    std::size_t i, j;
    std::int64_t delta;
  };
  std::vector<Candidate> cand;
  std::size_t first = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::int64_t ta = a[i].timestamp.count();
    while (first < b.size() && 2 * (b[first].timestamp.count() - off - ta) < -w) ++first;
    for (std::size_t j = first; j < b.size(); ++j) {
      const std::int64_t tb = b[j].timestamp.count() - off;
      const std::int64_t d = tb - ta;
      if (2 * d > w) break;
      cand.push_back({d < 0 ? -d : d, std::min(ta, tb), i, j, d});
    }
  }

  MatchResult out;
  auto count = [&](const Candidate& c) {
    out.table.at(a[c.i].setting, b[c.j].setting, a[c.i].detector, b[c.j].detector) += 1;
    out.pairs.push_back({c.i, c.j, c.delta});
  };

  if (mode == MatchMode::AllPairs) {
    for (const auto& c : cand) count(c);
    return out;
  }

  std::sort(cand.begin(), cand.end(), [](const Candidate& x, const Candidate& y) {
    if (x.abs_delta != y.abs_delta) return x.abs_delta < y.abs_delta;
    if (x.earliest != y.earliest) return x.earliest < y.earliest;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  std::vector<bool> used_a(a.size(), false), used_b(b.size(), false);
  for (const auto& c : cand) {
    if (used_a[c.i] || used_b[c.j]) continue;
    used_a[c.i] = used_b[c.j] = true;
    count(c);
  }
  std::sort(out.pairs.begin(), out.pairs.end(),
            [](const MatchedPair& x, const MatchedPair& y) { return x.a < y.a; });
  return out;
}

// Expected accidental coincidences between independent Poisson streams.
inline double expected_accidentals(double rate_a, double rate_b, double window, double duration) {
  return rate_a * rate_b * window * duration;
}

}  // namespace bellsim
