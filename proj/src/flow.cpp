#include <algorithm>
#include <array>
#include <cmath>

#include "strcn/connectivity.hpp"
#include "strcn/errors.hpp"

// Coarse-to-fine variational flow with a Lorentzian penalty on both the data
// and smoothness terms. Each warp iteration linearizes the data term around
// the current flow and minimizes the resulting half-quadratic bound with
// Gauss-Seidel sweeps; increments are only accepted when the true robust
// energy does not increase, which makes the per-level energy trace monotone.

namespace strcn {

namespace {

double lorentzian(double x, double two_sigma_sq) {
  return std::log1p(x * x / two_sigma_sq);
}

struct Grid {
  int h = 0, w = 0;
  std::vector<double> v;
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
};

Grid from_image(const Image& img) {
  Grid g;
  g.h = img.h;
  g.w = img.w;
  g.v = img.data;
  return g;
}

double sample(const Grid& g, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(g.h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(g.w - 1));
  const int y0 = static_cast<int>(y);
  const int x0 = static_cast<int>(x);
  const int y1 = std::min(y0 + 1, g.h - 1);
  const int x1 = std::min(x0 + 1, g.w - 1);
  const double fy = y - y0, fx = x - x0;
  return (g.at(y0, x0) * (1 - fx) + g.at(y0, x1) * fx) * (1 - fy) +
         (g.at(y1, x0) * (1 - fx) + g.at(y1, x1) * fx) * fy;
}

Grid blur_and_halve(const Grid& g) {
  static const double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  auto reflect = [](int i, int n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); };
  Grid tmp{g.h, g.w, std::vector<double>(g.v.size())};
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      double s = 0.0;
      for (int d = -2; d <= 2; ++d) s += k[d + 2] * g.at(y, reflect(x + d, g.w));
      tmp.at(y, x) = s;
    }
  Grid smooth{g.h, g.w, std::vector<double>(g.v.size())};
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      double s = 0.0;
      for (int d = -2; d <= 2; ++d) s += k[d + 2] * tmp.at(reflect(y + d, g.h), x);
      smooth.at(y, x) = s;
    }
  Grid out{(g.h + 1) / 2, (g.w + 1) / 2, {}};
  out.v.resize(static_cast<std::size_t>(out.h) * out.w);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) out.at(y, x) = smooth.at(2 * y, 2 * x);
  return out;
}

Grid upsample_to(const Grid& g, int h, int w, double value_scale) {
  Grid out{h, w, std::vector<double>(static_cast<std::size_t>(h) * w)};
  const double sy = h > 1 ? static_cast<double>(g.h - 1) / (h - 1) : 0.0;
  const double sx = w > 1 ? static_cast<double>(g.w - 1) / (w - 1) : 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(y, x) = value_scale * sample(g, y * sy, x * sx);
  return out;
}

Grid median3(const Grid& g) {
  Grid out = g;
  std::array<double, 9> window;
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = std::clamp(y + dy, 0, g.h - 1);
          const int xx = std::clamp(x + dx, 0, g.w - 1);
          window[n++] = g.at(yy, xx);
        }
      std::nth_element(window.begin(), window.begin() + 4, window.begin() + n);
      out.at(y, x) = window[4];
    }
  return out;
}

double energy_of(const Grid& i0, const Grid& i1, const Grid& u, const Grid& v,
                 const FlowParams& params) {
  const double two_sigma_sq = 2.0 * params.lorentzian_sigma * params.lorentzian_sigma;
  double e = 0.0;
  for (int y = 0; y < i0.h; ++y)
    for (int x = 0; x < i0.w; ++x) {
      const double warped = sample(i1, y + v.at(y, x), x + u.at(y, x));
      e += lorentzian(warped - i0.at(y, x), two_sigma_sq);
      // Forward-difference gradient magnitudes of u and v.
      const double ux = x + 1 < i0.w ? u.at(y, x + 1) - u.at(y, x) : 0.0;
      const double uy = y + 1 < i0.h ? u.at(y + 1, x) - u.at(y, x) : 0.0;
      const double vx = x + 1 < i0.w ? v.at(y, x + 1) - v.at(y, x) : 0.0;
      const double vy = y + 1 < i0.h ? v.at(y + 1, x) - v.at(y, x) : 0.0;
      e += params.smoothness_weight * (lorentzian(std::sqrt(ux * ux + uy * uy), two_sigma_sq) +
                                       lorentzian(std::sqrt(vx * vx + vy * vy), two_sigma_sq));
    }
  return e;
}

// One coarse-to-fine level: warp, linearize, IRLS + Gauss-Seidel, guarded update.
void solve_level(const Grid& i0, const Grid& i1, Grid& u, Grid& v, const FlowParams& params,
                 std::vector<double>& energies, bool* converged) {
  const int h = i0.h, w = i0.w;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const double two_sigma_sq = 2.0 * params.lorentzian_sigma * params.lorentzian_sigma;
  const double mu = params.smoothness_weight;

  double current_energy = energy_of(i0, i1, u, v, params);
  energies.push_back(current_energy);

  Grid it{h, w, std::vector<double>(n)}, ix{h, w, std::vector<double>(n)},
      iy{h, w, std::vector<double>(n)};
  Grid du{h, w, std::vector<double>(n)}, dv{h, w, std::vector<double>(n)};
  std::vector<double> wdata(n), wsmooth(n);

  for (int warp = 0; warp < params.warp_iterations; ++warp) {
    // Warp the target image and form linearized residual terms.
    Grid warped{h, w, std::vector<double>(n)};
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) warped.at(y, x) = sample(i1, y + v.at(y, x), x + u.at(y, x));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        it.at(y, x) = warped.at(y, x) - i0.at(y, x);
        const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
        const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
        // Averaged derivatives of source and warped target.
        ix.at(y, x) = 0.25 * (i0.at(y, xp) - i0.at(y, xm) + warped.at(y, xp) - warped.at(y, xm));
        iy.at(y, x) = 0.25 * (i0.at(yp, x) - i0.at(ym, x) + warped.at(yp, x) - warped.at(ym, x));
      }

    std::fill(du.v.begin(), du.v.end(), 0.0);
    std::fill(dv.v.begin(), dv.v.end(), 0.0);

    for (int pass = 0; pass < params.relaxation_passes; ++pass) {
      // Half-quadratic weights at the current increment.
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          const double r = it.at(y, x) + ix.at(y, x) * du.at(y, x) + iy.at(y, x) * dv.at(y, x);
          wdata[i] = 1.0 / (two_sigma_sq + r * r);
          const double tu_x = x + 1 < w ? u.at(y, x + 1) + du.at(y, x + 1) - u.at(y, x) - du.at(y, x) : 0.0;
          const double tu_y = y + 1 < h ? u.at(y + 1, x) + du.at(y + 1, x) - u.at(y, x) - du.at(y, x) : 0.0;
          const double tv_x = x + 1 < w ? v.at(y, x + 1) + dv.at(y, x + 1) - v.at(y, x) - dv.at(y, x) : 0.0;
          const double tv_y = y + 1 < h ? v.at(y + 1, x) + dv.at(y + 1, x) - v.at(y, x) - dv.at(y, x) : 0.0;
          // One shared weight per pixel for u and v keeps the system SPD.
          const double grad_sq = tu_x * tu_x + tu_y * tu_y + tv_x * tv_x + tv_y * tv_y;
          wsmooth[i] = 1.0 / (two_sigma_sq + grad_sq);
        }

      for (int sweep = 0; sweep < params.solver_iterations; ++sweep) {
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double wd = wdata[i];
            const double gx = ix.at(y, x), gy = iy.at(y, x), gt = it.at(y, x);

            double wsum = 0.0, su = 0.0, sv = 0.0;
            auto add_neighbor = [&](int yy, int xx) {
              const std::size_t j = static_cast<std::size_t>(yy) * w + xx;
              // Edge weight from the endpoint owning the forward difference.
              const double we =
                  mu * ((xx >= x && yy >= y) ? wsmooth[i] : wsmooth[j]);
              wsum += we;
              su += we * (u.at(yy, xx) + du.at(yy, xx) - u.at(y, x));
              sv += we * (v.at(yy, xx) + dv.at(yy, xx) - v.at(y, x));
            };
            if (x + 1 < w) add_neighbor(y, x + 1);
            if (x > 0) add_neighbor(y, x - 1);
            if (y + 1 < h) add_neighbor(y + 1, x);
            if (y > 0) add_neighbor(y - 1, x);

            // 2x2 system for (du, dv) at this pixel.
            const double a11 = wd * gx * gx + wsum;
            const double a22 = wd * gy * gy + wsum;
            const double a12 = wd * gx * gy;
            const double b1 = -wd * gx * gt + su;
            const double b2 = -wd * gy * gt + sv;
            const double det = a11 * a22 - a12 * a12;
            if (std::abs(det) > 1e-12) {
              du.at(y, x) = (b1 * a22 - b2 * a12) / det;
              dv.at(y, x) = (b2 * a11 - b1 * a12) / det;
            }
          }
      }
    }

    // Guarded update: clamp the increment, try the median-filtered candidate
    // first, then fall back to damped raw increments.
    Grid u_cand = u, v_cand = v;
    for (std::size_t i = 0; i < n; ++i) {
      u_cand.v[i] += std::clamp(du.v[i], -1.0, 1.0);
      v_cand.v[i] += std::clamp(dv.v[i], -1.0, 1.0);
    }
    const Grid u_med = median3(u_cand);
    const Grid v_med = median3(v_cand);
    const double e_med = energy_of(i0, i1, u_med, v_med, params);
    const double e_raw = energy_of(i0, i1, u_cand, v_cand, params);

    bool accepted = false;
    if (e_med <= current_energy && e_med <= e_raw) {
      u = u_med;
      v = v_med;
      current_energy = e_med;
      accepted = true;
    } else if (e_raw <= current_energy) {
      u = std::move(u_cand);
      v = std::move(v_cand);
      current_energy = e_raw;
      accepted = true;
    } else {
      double scale = 0.5;
      for (int k = 0; k < 5 && !accepted; ++k, scale *= 0.5) {
        Grid u_try = u, v_try = v;
        for (std::size_t i = 0; i < n; ++i) {
          u_try.v[i] += scale * std::clamp(du.v[i], -1.0, 1.0);
          v_try.v[i] += scale * std::clamp(dv.v[i], -1.0, 1.0);
        }
        const double e_try = energy_of(i0, i1, u_try, v_try, params);
        if (e_try <= current_energy) {
          u = std::move(u_try);
          v = std::move(v_try);
          current_energy = e_try;
          accepted = true;
        }
      }
    }
    energies.push_back(current_energy);

    if (!accepted) return;  // stationary at this level
  }

  // Still making visible progress when the iteration budget ran out?
  const std::size_t m = energies.size();
  if (m >= 2 && energies[m - 2] > 0.0) {
    const double rel = (energies[m - 2] - energies[m - 1]) / std::abs(energies[m - 2]);
    if (rel > 1e-4) *converged = false;
  }
}

}  // namespace

double flow_energy(const Image& onset_gray, const Image& apex_gray, const FlowField& flow,
                   const FlowParams& params) {
  Grid u{flow.h, flow.w, flow.u}, v{flow.h, flow.w, flow.v};
  return energy_of(from_image(to_gray(onset_gray)), from_image(to_gray(apex_gray)), u, v, params);
}

FlowResult estimate_flow(const Image& onset, const Image& apex, const FlowParams& params) {
  if (onset.h != apex.h || onset.w != apex.w)
    throw ShapeError("estimate_flow: frame dimensions differ");
  if (params.levels < 1) throw ConfigError("estimate_flow: levels must be >= 1");

  // Pyramids, coarse last.
  std::vector<Grid> p0{from_image(to_gray(onset))};
  std::vector<Grid> p1{from_image(to_gray(apex))};
  for (int l = 1; l < params.levels; ++l) {
    if (p0.back().h < 8 || p0.back().w < 8) break;  // stop shrinking tiny images
    p0.push_back(blur_and_halve(p0.back()));
    p1.push_back(blur_and_halve(p1.back()));
  }

  FlowResult result;
  const int coarsest = static_cast<int>(p0.size()) - 1;
  Grid u{p0[coarsest].h, p0[coarsest].w,
         std::vector<double>(static_cast<std::size_t>(p0[coarsest].h) * p0[coarsest].w, 0.0)};
  Grid v = u;

  for (int l = coarsest; l >= 0; --l) {
    if (l != coarsest) {
      u = upsample_to(u, p0[l].h, p0[l].w, 2.0);
      v = upsample_to(v, p0[l].h, p0[l].w, 2.0);
    }
    result.energy_trace.emplace_back();
    solve_level(p0[l], p1[l], u, v, params, result.energy_trace.back(), &result.converged);
  }

  result.flow.h = u.h;
  result.flow.w = u.w;
  result.flow.u = std::move(u.v);
  result.flow.v = std::move(v.v);
  return result;
}

}  // namespace strcn
