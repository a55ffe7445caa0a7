#include "cpd/diffusion/schedule.hpp"

#include "cpd/error.hpp"
#include "cpd/nn/checkpoint.hpp"
#include "cpd/text.hpp"

#include <cmath>

namespace cpd::diffusion {

double DiffusionSchedule::alpha_bar_at(int k) const {
  if (k == -1) return 1.0;
  require(k >= 0 && k < k_train, ErrorKind::InvalidArgument,
          "diffusion step " + std::to_string(k) + " outside [0, " + std::to_string(k_train) + ")");
  return alpha_bar[static_cast<std::size_t>(k)];
}

std::string DiffusionSchedule::describe() const {
  return "k_train=" + std::to_string(k_train) + "\nk_infer=" + std::to_string(k_infer) +
         "\nbeta_start=" + format_double(beta_start) + "\nbeta_end=" + format_double(beta_end) +
         "\nramp=linear\nspacing=leading\n";
}

std::uint64_t DiffusionSchedule::digest() const { return nn::fnv1a64(describe()); }

DiffusionSchedule DiffusionSchedule::parse(const std::string& described) {
  const auto kv = parse_key_values(described, "schedule");
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    require(it != kv.end(), ErrorKind::MalformedFile, std::string("schedule lacks '") + key + "'");
    return it->second;
  };
  require(get("ramp") == "linear" && get("spacing") == "leading", ErrorKind::MalformedFile,
          "unsupported schedule ramp or spacing");
  return make_schedule(static_cast<int>(parse_int(get("k_train"), "k_train")),
                       static_cast<int>(parse_int(get("k_infer"), "k_infer")),
                       parse_double(get("beta_start"), "beta_start"), parse_double(get("beta_end"), "beta_end"));
}

DiffusionSchedule make_schedule(int k_train, int k_infer, double beta_start, double beta_end) {
  require(k_train >= 1 && k_infer >= 1 && k_infer <= k_train, ErrorKind::InvalidArgument,
          "schedule needs 1 <= k_infer <= k_train");
  require(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end, ErrorKind::InvalidArgument,
          "betas must satisfy 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.k_train = k_train;
  s.k_infer = k_infer;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.betas.resize(static_cast<std::size_t>(k_train));
  s.alpha_bar.resize(static_cast<std::size_t>(k_train));
  double prod = 1.0;
  for (int i = 0; i < k_train; ++i) {
    const double f = k_train == 1 ? 0.0 : static_cast<double>(i) / (k_train - 1);
    s.betas[i] = beta_start + (beta_end - beta_start) * f;
    prod *= 1.0 - s.betas[i];
    s.alpha_bar[i] = prod;
  }
  const int stride = k_train / k_infer;
  for (int i = k_infer - 1; i >= 0; --i) s.timesteps.push_back(i * stride);
  return s;
}

RowVec add_noise(const RowVec& p0, const RowVec& eps, int k, const DiffusionSchedule& s) {
  require(p0.size() == eps.size(), ErrorKind::ShapeMismatch, "add_noise: latent and noise sizes differ");
  const double ab = s.alpha_bar_at(k);
  return std::sqrt(ab) * p0 + std::sqrt(1.0 - ab) * eps;
}

RowVec eps_to_x0(const RowVec& pk, const RowVec& eps_hat, int k, const DiffusionSchedule& s) {
  require(pk.size() == eps_hat.size(), ErrorKind::ShapeMismatch, "eps_to_x0: latent and noise sizes differ");
  const double ab = s.alpha_bar_at(k);
  return (pk - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

DdimStep ddim_step(const RowVec& pk, const RowVec& eps_hat, int k, int k_prev, const DiffusionSchedule& s) {
  require(k_prev < k, ErrorKind::InvalidArgument, "ddim_step needs k_prev < k");
  DdimStep out;
  out.x0 = eps_to_x0(pk, eps_hat, k, s);
  const double ab = s.alpha_bar_at(k_prev);
  out.prev = k_prev == -1 ? out.x0 : RowVec(std::sqrt(ab) * out.x0 + std::sqrt(1.0 - ab) * eps_hat);
  return out;
}

double mixing_weight(int k_index, int k_infer, bool conditioned) {
  require(k_infer >= 1 && k_index >= 0 && k_index <= k_infer, ErrorKind::InvalidArgument,
          "mixing_weight: step index outside [0, K]");
  if (!conditioned) return 1.0;
  const double x = static_cast<double>(k_index) / k_infer;
  return x * x * x;
}

RowVec phase_mix(const std::optional<RowVec>& eps_f, const std::optional<RowVec>& eps_b,
                 const std::optional<RowVec>& eps_c, double r) {
  require(eps_f || eps_b || eps_c, ErrorKind::InvalidArgument, "phase_mix: no inputs");
  if (!eps_f && !eps_b) return *eps_c;
  RowVec dir = eps_f && eps_b ? RowVec(0.5 * (*eps_f + *eps_b)) : (eps_f ? *eps_f : *eps_b);
  if (!eps_c) return dir;
  return r * dir + (1.0 - r) * *eps_c;
}

}  // namespace cpd::diffusion
