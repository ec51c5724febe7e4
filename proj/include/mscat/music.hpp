#pragma once

// MUSIC pseudospectrum from the leading left singular vectors of the response matrix.

#include "mscat/forward.hpp"
#include "mscat/geometry.hpp"

#include <algorithm>
#include <numeric>

namespace mscat {

inline constexpr double kMusicFloor = 1e-12;

struct MusicImage {
  RealVector values;
  Index nu_used = 0;
};

inline MusicImage music_image(const ResponseMatrix& p, const ImageWindow& iw, const ArrayGeometry& geom, Index nu) {
  if (nu < 1 || nu > p.size()) throw Error("number of singular vectors must be in 1..N");
  if (p.size() != geom.size()) throw Error("response matrix size differs from the sensor count");
  const ComplexMatrix signal = p.svd().U.leftCols(nu);
  MusicImage img;
  img.nu_used = nu;
  img.values.resize(iw.size());
  for (Index k = 0; k < iw.size(); ++k) {
    ComplexVector g = green_vector(geom, iw.point(k));
    g /= g.norm();
    const double s = (signal.adjoint() * g).squaredNorm();
    img.values(k) = 1.0 / (std::max(0.0, 1.0 - s) + kMusicFloor);
  }
  return img;
}

/// Grid indices that are strict maxima over their 8 neighbours, by decreasing value.
inline IndexSet local_maxima(const RealVector& values, const ImageWindow& iw) {
  IndexSet peaks;
  for (Index k = 0; k < iw.size(); ++k) {
    const Index r = iw.row(k), c = iw.col(k);
    bool peak = true;
    for (Index dr = -1; dr <= 1 && peak; ++dr)
      for (Index dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        const Index rr = r + dr, cc = c + dc;
        if (rr < 0 || rr >= iw.ny() || cc < 0 || cc >= iw.nx()) continue;
        if (values(iw.index(rr, cc)) >= values(k)) {
          peak = false;
          break;
        }
      }
    if (peak) peaks.push_back(k);
  }
  std::stable_sort(peaks.begin(), peaks.end(), [&](Index a, Index b) { return values(a) > values(b); });
  return peaks;
}

/// The `count` largest local maxima, sorted by grid index.
inline IndexSet top_peaks(const RealVector& values, const ImageWindow& iw, Index count) {
  IndexSet peaks = local_maxima(values, iw);
  if (static_cast<Index>(peaks.size()) > count) peaks.resize(static_cast<std::size_t>(count));
  std::sort(peaks.begin(), peaks.end());
  return peaks;
}

}  // namespace mscat
