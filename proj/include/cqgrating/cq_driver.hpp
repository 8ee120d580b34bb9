#pragma once

// Convolution quadrature in the all-at-once Laplace-domain form: the time
// samples are mapped to M+1 frequencies on a scaled circle, each frequency
// is solved independently and the nodal/modal values are mapped back.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cqgrating/frequency_solver.hpp"
#include "cqgrating/pulses.hpp"

namespace cqgrating {

enum class MultistepRule { backward_euler, bdf2 };

int rule_order(MultistepRule rule);
MultistepRule parse_rule(const std::string& name);  // "be" or "bdf2"
std::string rule_name(MultistepRule rule);

// BE: 1 - zeta, BDF2: 3/2 - 2 zeta + zeta^2 / 2.
Complex gamma(MultistepRule rule, Complex zeta);

struct CqPlan {
  MultistepRule rule = MultistepRule::bdf2;
  double dt = 0.0;
  int n_steps = 0;  // M; samples at t_n = n dt, n = 0..M
  double epsilon = 1e-14;
  double radius = 0.0;  // lambda_R
  bool half_contour = true;
  std::vector<Complex> frequencies;  // s_l, l = 0..M
  std::vector<int> conjugate;        // index of conj(s_l)

  int size() const { return n_steps + 1; }
  // Contour indices that are actually solved: 0..floor((M+1)/2) with the
  // half contour, everything otherwise.
  std::vector<int> solved_indices() const;
};

// Throws InvalidParameter for dt <= 0 or n_steps < 0 and ContourTouchesAxis
// if some Re(s_l) <= 0.
CqPlan plan(MultistepRule rule, double dt, int n_steps, double epsilon = 1e-14,
            bool half_contour = true);

// Contour indices where the Assumption-1 margin drops below gamma0.
std::vector<int> margin_violations(const CqPlan& plan, const MaterialMap& materials, double d1,
                                   double gamma0);
// Throws AssumptionViolated when margin_violations is non-empty.
void check_margins(const CqPlan& plan, const MaterialMap& materials, double d1, double gamma0);

// Scaled DFT pair for one contour size. The object owns FFTW plans and a
// work buffer, so each thread needs its own instance.
class ScaledDft {
 public:
  ScaledDft(int size, double radius);
  ~ScaledDft();
  ScaledDft(const ScaledDft&) = delete;
  ScaledDft& operator=(const ScaledDft&) = delete;

  int size() const { return size_; }
  // g_l = sum_n g_n r^n exp(-2 pi i n l / (M+1))
  std::vector<Complex> forward(std::span<const Complex> samples);
  // v_n = r^-n / (M+1) sum_l V_l exp(2 pi i n l / (M+1))
  std::vector<Complex> inverse(std::span<const Complex> values);

 private:
  struct Impl;
  int size_;
  double radius_;
  std::unique_ptr<Impl> impl_;
};

std::vector<Complex> scaled_forward_dft(std::span<const Complex> samples, double radius);
std::vector<Complex> scaled_inverse_dft(std::span<const Complex> values, double radius);

// Fills the unsolved half of a contour vector by conjugation.
void synthesize_conjugates(const CqPlan& plan, std::vector<Complex>& values);

// Discrete convolution of samples with the operator whose transform is
// symbol(s), evaluated through the contour (symbol(s) = s gives the CQ
// derivative).
std::vector<double> cq_apply(const CqPlan& plan, std::span<const double> samples,
                             const std::function<Complex(Complex)>& symbol);

struct Probe {
  double x = 0.0;
  double z = 0.0;
};

struct CqOptions {
  MultistepRule rule = MultistepRule::bdf2;
  double dt = 0.0;
  int n_steps = 0;
  double epsilon = 1e-14;
  bool half_contour = true;
  int workers = 1;                // 0 means hardware concurrency
  bool store_all = false;         // keep every nodal field
  std::vector<int> store_steps;   // otherwise only these steps
  std::vector<Probe> probes;
};

struct FieldMovie {
  double dt = 0.0;
  int n_steps = 0;
  int N = 0;
  double contour_radius = 0.0;
  std::vector<double> times;
  std::vector<int> stored_steps;              // ascending
  std::vector<Eigen::VectorXd> nodal_fields;  // aligned with stored_steps
  std::vector<std::vector<Complex>> modes_bottom;  // [step][n + N], reflected modes
  std::vector<std::vector<Complex>> modes_top;     // [step][n + N], transmitted modes
  std::vector<Probe> probes;
  std::vector<std::vector<double>> probe_traces;  // [probe][step]
  double max_imag_residue = 0.0;  // relative to the largest |value|
  double max_residual = 0.0;      // largest transmission residual on the contour

  // Nodal field at a step or nullptr if it was not stored.
  const Eigen::VectorXd* field_at(int step) const;
};

// Solves every contour frequency with a pool of workers. The result does not
// depend on the worker count. Failed frequencies raise PartialContourFailure.
FieldMovie run_cq(const FrequencySolver& solver, const Pulse& pulse, const CqOptions& options);

// Causal stencils: BE (w_n - w_{n-1}) / dt, BDF2 (3/2 w_n - 2 w_{n-1} +
// 1/2 w_{n-2}) / dt with zero history before n = 0.
std::vector<double> discrete_time_derivative(std::span<const double> samples, MultistepRule rule,
                                             double dt);
// Applied to probes, modes and stored fields; a stored step whose
// predecessors are missing is dropped from the result.
FieldMovie discrete_time_derivative(const FieldMovie& movie, MultistepRule rule);

// Lab-frame trace u(x, z, t_n) = w(x, z, t_n + (L - x) d1 / c) by linear
// interpolation in time; NaN past the final sample.
std::vector<double> lab_frame_trace(std::span<const double> trace, double dt, double x,
                                    const IncidentGeometry& geom);

}  // namespace cqgrating
