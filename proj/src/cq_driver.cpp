#include "cqgrating/cq_driver.hpp"

#include <fftw3.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace cqgrating {
namespace {

constexpr Complex kI{0.0, 1.0};

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Residue of the scaled kernel exp(2 pi i n l / (M+1)) computed from the
// reduced exponent so large n l stay accurate.
Complex unit_root(long long n, long long l, int size) {
  const long long k = (n * l) % size;
  return std::exp(kI * (2.0 * kPi * static_cast<double>(k) / size));
}

struct ContourResult {
  bool done = false;
  std::string error;
  Eigen::VectorXcd w_hat;
  std::vector<Complex> probes;
  std::vector<Complex> modes_bottom;
  std::vector<Complex> modes_top;
  double residual = 0.0;
};

template <typename T, typename Zero>
std::vector<T> stencil(const std::vector<T>& w, MultistepRule rule, double dt, Zero zero) {
  std::vector<T> out(w.size(), zero);
  for (std::size_t n = 0; n < w.size(); ++n) {
    const T w1 = n >= 1 ? w[n - 1] : zero;
    if (rule == MultistepRule::backward_euler) {
      out[n] = (w[n] - w1) / dt;
    } else {
      const T w2 = n >= 2 ? w[n - 2] : zero;
      out[n] = (1.5 * w[n] - 2.0 * w1 + 0.5 * w2) / dt;
    }
  }
  return out;
}

}  // namespace

int rule_order(MultistepRule rule) { return rule == MultistepRule::backward_euler ? 1 : 2; }

MultistepRule parse_rule(const std::string& name) {
  if (name == "be" || name == "backward_euler") return MultistepRule::backward_euler;
  if (name == "bdf2") return MultistepRule::bdf2;
  throw Error(ErrorCode::InvalidConfig, "unknown multistep rule '" + name + "'");
}

std::string rule_name(MultistepRule rule) {
  return rule == MultistepRule::backward_euler ? "be" : "bdf2";
}

Complex gamma(MultistepRule rule, Complex zeta) {
  if (rule == MultistepRule::backward_euler) return 1.0 - zeta;
  return 1.5 - 2.0 * zeta + 0.5 * zeta * zeta;
}

std::vector<int> CqPlan::solved_indices() const {
  std::vector<int> out;
  const int last = half_contour ? size() / 2 : size() - 1;
  for (int l = 0; l <= last; ++l) out.push_back(l);
  return out;
}

CqPlan plan(MultistepRule rule, double dt, int n_steps, double epsilon, bool half_contour) {
  if (!(dt > 0.0) || n_steps < 0) {
    throw Error(ErrorCode::InvalidParameter, "plan needs dt > 0 and n_steps >= 0");
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw Error(ErrorCode::InvalidParameter, "contour accuracy must lie in (0, 1)");
  }
  CqPlan p;
  p.rule = rule;
  p.dt = dt;
  p.n_steps = n_steps;
  p.epsilon = epsilon;
  p.half_contour = half_contour;
  const int size = n_steps + 1;
  p.radius = std::pow(epsilon, 1.0 / (2.0 * size));
  p.frequencies.resize(static_cast<std::size_t>(size));
  p.conjugate.resize(static_cast<std::size_t>(size));
  for (int l = 0; l < size; ++l) {
    const Complex zeta = p.radius * unit_root(-1, l, size);
    const Complex s = gamma(rule, zeta) / dt;
    if (!(s.real() > 0.0)) {
      throw Error(ErrorCode::ContourTouchesAxis,
                  "contour frequency " + std::to_string(l) + " has Re(s) <= 0");
    }
    p.frequencies[static_cast<std::size_t>(l)] = s;
    p.conjugate[static_cast<std::size_t>(l)] = (size - l) % size;
  }
  return p;
}

std::vector<int> margin_violations(const CqPlan& plan, const MaterialMap& materials, double d1,
                                   double gamma0) {
  std::vector<int> bad;
  for (int l = 0; l < plan.size(); ++l) {
    const double margin = materials.min_margin(plan.frequencies[static_cast<std::size_t>(l)], d1);
    if (!(margin >= gamma0 * (1.0 - 1e-12))) bad.push_back(l);
  }
  return bad;
}

void check_margins(const CqPlan& plan, const MaterialMap& materials, double d1, double gamma0) {
  const auto bad = margin_violations(plan, materials, d1, gamma0);
  if (!bad.empty()) {
    throw Error(ErrorCode::AssumptionViolated,
                std::to_string(bad.size()) + " contour points violate the material margin, first l = " +
                    std::to_string(bad.front()));
  }
}

// The inverse multiplies by radius^-n, up to about epsilon^-1/2, so the
// transforms run in long double to keep the round trip near 1e-12.
struct ScaledDft::Impl {
  fftwl_complex* buffer = nullptr;
  fftwl_plan forward = nullptr;
  fftwl_plan backward = nullptr;
};

ScaledDft::ScaledDft(int size, double radius)
    : size_(size), radius_(radius), impl_(std::make_unique<Impl>()) {
  if (size < 1) throw Error(ErrorCode::InvalidParameter, "DFT size must be positive");
  std::lock_guard<std::mutex> lock(fftw_planner_mutex());
  impl_->buffer = fftwl_alloc_complex(static_cast<std::size_t>(size));
  impl_->forward =
      fftwl_plan_dft_1d(size, impl_->buffer, impl_->buffer, FFTW_FORWARD, FFTW_ESTIMATE);
  impl_->backward =
      fftwl_plan_dft_1d(size, impl_->buffer, impl_->buffer, FFTW_BACKWARD, FFTW_ESTIMATE);
}

ScaledDft::~ScaledDft() {
  std::lock_guard<std::mutex> lock(fftw_planner_mutex());
  fftwl_destroy_plan(impl_->forward);
  fftwl_destroy_plan(impl_->backward);
  fftwl_free(impl_->buffer);
}

std::vector<Complex> ScaledDft::forward(std::span<const Complex> samples) {
  if (static_cast<int>(samples.size()) != size_) {
    throw Error(ErrorCode::InvalidParameter, "sample count does not match the DFT size");
  }
  auto* buf = impl_->buffer;
  long double scale = 1.0L;
  for (int n = 0; n < size_; ++n) {
    const Complex v = samples[static_cast<std::size_t>(n)];
    buf[n][0] = v.real() * scale;
    buf[n][1] = v.imag() * scale;
    scale *= radius_;
  }
  fftwl_execute(impl_->forward);
  std::vector<Complex> out(static_cast<std::size_t>(size_));
  for (int n = 0; n < size_; ++n) {
    out[static_cast<std::size_t>(n)] = {static_cast<double>(buf[n][0]),
                                        static_cast<double>(buf[n][1])};
  }
  return out;
}

std::vector<Complex> ScaledDft::inverse(std::span<const Complex> values) {
  if (static_cast<int>(values.size()) != size_) {
    throw Error(ErrorCode::InvalidParameter, "value count does not match the DFT size");
  }
  auto* buf = impl_->buffer;
  for (int n = 0; n < size_; ++n) {
    buf[n][0] = values[static_cast<std::size_t>(n)].real();
    buf[n][1] = values[static_cast<std::size_t>(n)].imag();
  }
  fftwl_execute(impl_->backward);
  std::vector<Complex> out(static_cast<std::size_t>(size_));
  long double scale = 1.0L / size_;
  for (int n = 0; n < size_; ++n) {
    out[static_cast<std::size_t>(n)] = {static_cast<double>(buf[n][0] * scale),
                                        static_cast<double>(buf[n][1] * scale)};
    scale /= radius_;
  }
  return out;
}

std::vector<Complex> scaled_forward_dft(std::span<const Complex> samples, double radius) {
  ScaledDft dft(static_cast<int>(samples.size()), radius);
  return dft.forward(samples);
}

std::vector<Complex> scaled_inverse_dft(std::span<const Complex> values, double radius) {
  ScaledDft dft(static_cast<int>(values.size()), radius);
  return dft.inverse(values);
}

void synthesize_conjugates(const CqPlan& plan, std::vector<Complex>& values) {
  if (!plan.half_contour) return;
  const int last = plan.size() / 2;
  for (int l = last + 1; l < plan.size(); ++l) {
    values[static_cast<std::size_t>(l)] =
        std::conj(values[static_cast<std::size_t>(plan.conjugate[static_cast<std::size_t>(l)])]);
  }
}

std::vector<double> cq_apply(const CqPlan& plan, std::span<const double> samples,
                             const std::function<Complex(Complex)>& symbol) {
  if (static_cast<int>(samples.size()) != plan.size()) {
    throw Error(ErrorCode::InvalidParameter, "sample count does not match the plan");
  }
  ScaledDft dft(plan.size(), plan.radius);
  const std::vector<Complex> g(samples.begin(), samples.end());
  auto hat = dft.forward(g);
  for (int l = 0; l < plan.size(); ++l) {
    hat[static_cast<std::size_t>(l)] *= symbol(plan.frequencies[static_cast<std::size_t>(l)]);
  }
  const auto v = dft.inverse(hat);
  std::vector<double> out(v.size());
  for (std::size_t n = 0; n < v.size(); ++n) out[n] = v[n].real();
  return out;
}

const Eigen::VectorXd* FieldMovie::field_at(int step) const {
  const auto it = std::lower_bound(stored_steps.begin(), stored_steps.end(), step);
  if (it == stored_steps.end() || *it != step) return nullptr;
  return &nodal_fields[static_cast<std::size_t>(it - stored_steps.begin())];
}

FieldMovie run_cq(const FrequencySolver& solver, const Pulse& pulse, const CqOptions& options) {
  validate_pulse(pulse);
  const CqPlan p = plan(options.rule, options.dt, options.n_steps, options.epsilon,
                        options.half_contour);
  const IncidentGeometry& geom = solver.geometry();
  check_margins(p, solver.materials(), geom.d1, solver.gamma0());

  const int size = p.size();
  const int N = solver.N();
  const int modes = 2 * N + 1;
  const int n_dofs = solver.dofmap().n_dofs;
  const double H = solver.mesh().H();
  for (const auto& probe : options.probes) {
    if (!std::isfinite(probe.x) || !std::isfinite(probe.z)) {
      throw Error(ErrorCode::InvalidParameter, "probe coordinates must be finite");
    }
  }

  FieldMovie movie;
  movie.dt = p.dt;
  movie.n_steps = p.n_steps;
  movie.N = N;
  movie.contour_radius = p.radius;
  movie.probes = options.probes;
  for (int n = 0; n < size; ++n) movie.times.push_back(n * p.dt);

  std::vector<int> stored;
  if (options.store_all) {
    for (int n = 0; n < size; ++n) stored.push_back(n);
  } else {
    for (int n : options.store_steps) {
      if (n < 0 || n >= size) throw Error(ErrorCode::InvalidParameter, "stored step out of range");
      stored.push_back(n);
    }
    std::sort(stored.begin(), stored.end());
    stored.erase(std::unique(stored.begin(), stored.end()), stored.end());
  }
  movie.stored_steps = stored;

  ScaledDft dft(size, p.radius);
  const auto trace = incident_trace_at_z(pulse, geom, 0.0, movie.times);
  const std::vector<Complex> trace_c(trace.begin(), trace.end());
  const auto trace_hat = dft.forward(trace_c);

  const auto solved = p.solved_indices();
  const int n_solved = static_cast<int>(solved.size());

  // Half-contour weights: a solved index with a distinct partner stands for
  // two terms of the inverse sum.
  auto paired = [&](int l) { return p.half_contour && p.conjugate[static_cast<std::size_t>(l)] != l; };

  // Accumulators for the selected-step path; complete nodal history for the
  // store-all path.
  std::vector<Eigen::VectorXcd> acc;
  Eigen::MatrixXcd half;
  if (options.store_all) {
    half = Eigen::MatrixXcd::Zero(n_dofs, n_solved);
  } else {
    acc.assign(stored.size(), Eigen::VectorXcd::Zero(n_dofs));
  }
  std::vector<std::vector<Complex>> probe_hat(options.probes.size(),
                                              std::vector<Complex>(static_cast<std::size_t>(size)));
  std::vector<std::vector<Complex>> bottom_hat(static_cast<std::size_t>(modes),
                                               std::vector<Complex>(static_cast<std::size_t>(size)));
  std::vector<std::vector<Complex>> top_hat = bottom_hat;

  unsigned workers = options.workers <= 0 ? std::max(1u, std::thread::hardware_concurrency())
                                          : static_cast<unsigned>(options.workers);
  workers = std::min<unsigned>(workers, static_cast<unsigned>(n_solved));
  const int batch = static_cast<int>(workers) * 4;

  std::vector<ContourResult> results(static_cast<std::size_t>(batch));
  std::vector<int> failed;
  std::string first_error;

  for (int start = 0; start < n_solved; start += batch) {
    const int end = std::min(n_solved, start + batch);
    for (auto& r : results) r = ContourResult{};
    std::atomic<int> next{start};
    auto work = [&]() {
      for (int i = next++; i < end; i = next++) {
        const int l = solved[static_cast<std::size_t>(i)];
        auto& r = results[static_cast<std::size_t>(i - start)];
        try {
          const Complex s = p.frequencies[static_cast<std::size_t>(l)];
          const FrequencySolution sol = solver.solve(s, trace_hat[static_cast<std::size_t>(l)]);
          r.residual = solver.residuals(sol).max();
          for (const auto& probe : options.probes) {
            r.probes.push_back(probe.z < 0.0 || probe.z > H
                                   ? solver.exterior_field(sol, probe.x, probe.z)
                                   : solver.interpolate(sol.w_hat, probe.x, probe.z));
          }
          r.modes_bottom = sol.w_s_modes.coeffs();
          r.modes_top = sol.w_t_modes.coeffs();
          r.w_hat = sol.w_hat;
          r.done = true;
        } catch (const std::exception& e) {
          r.error = e.what();
        }
      }
    };
    if (workers <= 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
      for (auto& t : pool) t.join();
    }

    // Reduction in contour order, independent of which thread finished first.
    for (int i = start; i < end; ++i) {
      const int l = solved[static_cast<std::size_t>(i)];
      auto& r = results[static_cast<std::size_t>(i - start)];
      if (!r.done) {
        failed.push_back(l);
        if (first_error.empty()) first_error = r.error;
        continue;
      }
      movie.max_residual = std::max(movie.max_residual, r.residual);
      for (std::size_t k = 0; k < options.probes.size(); ++k) {
        probe_hat[k][static_cast<std::size_t>(l)] = r.probes[k];
      }
      for (int k = 0; k < modes; ++k) {
        bottom_hat[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] =
            r.modes_bottom[static_cast<std::size_t>(k)];
        top_hat[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] =
            r.modes_top[static_cast<std::size_t>(k)];
      }
      if (options.store_all) {
        half.col(i) = r.w_hat;
      } else {
        for (std::size_t j = 0; j < stored.size(); ++j) {
          const int n = stored[j];
          const Complex weight = unit_root(n, l, size) * (std::pow(p.radius, -n) / size);
          if (paired(l)) {
            acc[j] += weight * r.w_hat;
            acc[j] += (weight * r.w_hat).conjugate();
          } else {
            acc[j] += weight * r.w_hat;
          }
        }
      }
      r.w_hat.resize(0);
    }
    if (!failed.empty()) break;
  }

  if (!failed.empty()) {
    std::ostringstream msg;
    msg << "frequency solves failed at contour indices";
    for (int l : failed) msg << ' ' << l;
    msg << ": " << first_error;
    throw Error(ErrorCode::PartialContourFailure, msg.str());
  }

  double peak = 0.0;
  double imag = 0.0;
  auto track = [&](const std::vector<Complex>& v) {
    for (const auto& z : v) {
      peak = std::max(peak, std::abs(z.real()));
      imag = std::max(imag, std::abs(z.imag()));
    }
  };

  for (auto& values : probe_hat) {
    synthesize_conjugates(p, values);
    const auto v = dft.inverse(values);
    track(v);
    std::vector<double> real(v.size());
    for (std::size_t n = 0; n < v.size(); ++n) real[n] = v[n].real();
    movie.probe_traces.push_back(std::move(real));
  }

  // mode n at conj(s) is the conjugate of mode -n at s
  auto invert_modes = [&](std::vector<std::vector<Complex>>& hat) {
    if (p.half_contour) {
      for (int l = size / 2 + 1; l < size; ++l) {
        const int partner = p.conjugate[static_cast<std::size_t>(l)];
        for (int k = 0; k < modes; ++k) {
          hat[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] =
              std::conj(hat[static_cast<std::size_t>(modes - 1 - k)][static_cast<std::size_t>(partner)]);
        }
      }
    }
    std::vector<std::vector<Complex>> out(static_cast<std::size_t>(size),
                                          std::vector<Complex>(static_cast<std::size_t>(modes)));
    for (int k = 0; k < modes; ++k) {
      const auto v = dft.inverse(hat[static_cast<std::size_t>(k)]);
      for (int n = 0; n < size; ++n) {
        out[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)] = v[static_cast<std::size_t>(n)];
      }
    }
    return out;
  };
  movie.modes_bottom = invert_modes(bottom_hat);
  movie.modes_top = invert_modes(top_hat);

  if (options.store_all) {
    movie.nodal_fields.assign(static_cast<std::size_t>(size), Eigen::VectorXd(n_dofs));
    std::vector<Complex> values(static_cast<std::size_t>(size));
    for (int d = 0; d < n_dofs; ++d) {
      if (p.half_contour) {
        for (int i = 0; i < n_solved; ++i) values[static_cast<std::size_t>(i)] = half(d, i);
        synthesize_conjugates(p, values);
      } else {
        for (int l = 0; l < size; ++l) values[static_cast<std::size_t>(l)] = half(d, l);
      }
      const auto v = dft.inverse(values);
      track(v);
      for (int n = 0; n < size; ++n) {
        movie.nodal_fields[static_cast<std::size_t>(n)](d) = v[static_cast<std::size_t>(n)].real();
      }
    }
  } else {
    for (const auto& a : acc) {
      track(std::vector<Complex>(a.data(), a.data() + a.size()));
      movie.nodal_fields.emplace_back(a.real());
    }
  }
  movie.max_imag_residue = peak > 0.0 ? imag / peak : imag;
  return movie;
}

std::vector<double> discrete_time_derivative(std::span<const double> samples, MultistepRule rule,
                                             double dt) {
  const std::vector<double> w(samples.begin(), samples.end());
  return stencil(w, rule, dt, 0.0);
}

FieldMovie discrete_time_derivative(const FieldMovie& movie, MultistepRule rule) {
  FieldMovie out = movie;
  const double dt = movie.dt;
  for (auto& trace : out.probe_traces) trace = discrete_time_derivative(trace, rule, dt);

  auto mode_derivative = [&](const std::vector<std::vector<Complex>>& history) {
    auto result = history;
    if (history.empty()) return result;
    const std::size_t modes = history.front().size();
    for (std::size_t k = 0; k < modes; ++k) {
      std::vector<Complex> series;
      for (const auto& step : history) series.push_back(step[k]);
      const auto d = stencil(series, rule, dt, Complex{0.0, 0.0});
      for (std::size_t n = 0; n < history.size(); ++n) result[n][k] = d[n];
    }
    return result;
  };
  out.modes_bottom = mode_derivative(movie.modes_bottom);
  out.modes_top = mode_derivative(movie.modes_top);

  out.stored_steps.clear();
  out.nodal_fields.clear();
  const int lag = rule_order(rule);
  for (std::size_t j = 0; j < movie.stored_steps.size(); ++j) {
    const int n = movie.stored_steps[j];
    const Eigen::VectorXd& w0 = movie.nodal_fields[j];
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(w0.size());
    std::vector<const Eigen::VectorXd*> prev;
    bool complete = true;
    for (int k = 1; k <= lag; ++k) {
      if (n - k < 0) {
        prev.push_back(&zero);
      } else if (const auto* f = movie.field_at(n - k)) {
        prev.push_back(f);
      } else {
        complete = false;
      }
    }
    if (!complete) continue;
    Eigen::VectorXd d = rule == MultistepRule::backward_euler
                            ? Eigen::VectorXd((w0 - *prev[0]) / dt)
                            : Eigen::VectorXd((1.5 * w0 - 2.0 * *prev[0] + 0.5 * *prev[1]) / dt);
    out.stored_steps.push_back(n);
    out.nodal_fields.push_back(std::move(d));
  }
  return out;
}

std::vector<double> lab_frame_trace(std::span<const double> trace, double dt, double x,
                                    const IncidentGeometry& geom) {
  const double shift = (geom.L - x) * geom.d1 / geom.c;
  const int last = static_cast<int>(trace.size()) - 1;
  std::vector<double> out(trace.size(), std::numeric_limits<double>::quiet_NaN());
  for (int n = 0; n <= last; ++n) {
    const double pos = n + shift / dt;
    const int i = static_cast<int>(std::floor(pos));
    if (i < 0 || i > last) continue;
    const double frac = pos - i;
    if (i == last) {
      if (frac < 1e-12) out[static_cast<std::size_t>(n)] = trace[static_cast<std::size_t>(last)];
      continue;
    }
    out[static_cast<std::size_t>(n)] = (1.0 - frac) * trace[static_cast<std::size_t>(i)] +
                                       frac * trace[static_cast<std::size_t>(i + 1)];
  }
  return out;
}

}  // namespace cqgrating
