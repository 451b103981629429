#include "meanfield2nn/sgd.hpp"

#include <algorithm>
#include <atomic>
#include <barrier>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <numeric>
#include <thread>

#include "meanfield2nn/parallel.hpp"
#include "meanfield2nn/random.hpp"

namespace mf {

namespace {

constexpr double kDivergenceNorm = 1e6;

double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += a[k] * b[k];
    return s;
}

} // namespace

// ---------------------------------------------------------------------------
// WeightEnsemble
// ---------------------------------------------------------------------------

WeightEnsemble::WeightEnsemble(int n, int d, bool relu)
    : n_(n), d_(d), relu_(relu), w_(static_cast<std::size_t>(n) * static_cast<std::size_t>(d), 0.0),
      a_(relu ? static_cast<std::size_t>(n) : 0, 0.0), b_(relu ? static_cast<std::size_t>(n) : 0, 0.0) {
    if (n < 1 || d < 1) throw std::invalid_argument("weight ensemble needs N >= 1 and d >= 1");
}

WeightEnsemble WeightEnsemble::gaussian(int n, int d, double sd, std::uint64_t seed, bool relu, double a0, double b0) {
    WeightEnsemble e(n, d, relu);
    for (int i = 0; i < n; ++i) {
        CounterRng rng(seed, kTagInit, static_cast<std::uint64_t>(i));
        for (double& x : e.w(i)) x = sd * rng.normal();
        if (relu) {
            e.a(i) = a0;
            e.b(i) = b0;
        }
    }
    return e;
}

double WeightEnsemble::norm(int i) const {
    const auto wi = w(i);
    return std::sqrt(dot(wi.data(), wi.data(), d_));
}

double WeightEnsemble::norm_head(int i, int s0) const {
    const auto wi = w(i);
    return std::sqrt(dot(wi.data(), wi.data(), std::min(s0, d_)));
}

double WeightEnsemble::norm_tail(int i, int s0) const {
    const auto wi = w(i);
    const int h = std::min(s0, d_);
    return std::sqrt(dot(wi.data() + h, wi.data() + h, d_ - h));
}

AtomEnsemble WeightEnsemble::summarize(std::optional<int> s0) const {
    std::vector<double> coords;
    if (relu_) {
        const int h = s0.value_or(d_);
        coords.reserve(static_cast<std::size_t>(n_) * 4);
        for (int i = 0; i < n_; ++i) {
            coords.push_back(a(i));
            coords.push_back(b(i));
            coords.push_back(norm_head(i, h));
            coords.push_back(norm_tail(i, h));
        }
        return AtomEnsemble::uniform(ReducedSpace::Relu4D, std::move(coords));
    }
    if (s0) {
        coords.reserve(static_cast<std::size_t>(n_) * 2);
        for (int i = 0; i < n_; ++i) {
            coords.push_back(norm_head(i, *s0));
            coords.push_back(norm_tail(i, *s0));
        }
        return AtomEnsemble::uniform(ReducedSpace::Aniso2D, std::move(coords));
    }
    coords.reserve(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) coords.push_back(norm(i));
    return AtomEnsemble::uniform(ReducedSpace::Radial1D, std::move(coords));
}

double WeightEnsemble::predict(const Activation& act, std::span<const double> x) const {
    std::vector<double> out(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) {
        const double z = dot(w(i).data(), x.data(), d_);
        out[static_cast<std::size_t>(i)] = relu_ ? a(i) * std::max(z + b(i), 0.0) : sigma_eval(act, z);
    }
    return pairwise_sum(out.data(), out.size()) / n_;
}

void WeightEnsemble::check_finite() const {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(w_.begin(), w_.end(), finite) || !std::all_of(a_.begin(), a_.end(), finite) ||
        !std::all_of(b_.begin(), b_.end(), finite))
        throw std::invalid_argument("weight ensemble has non-finite entries");
}

void SgdConfig::validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("sgd.epsilon must be >= 0");
    if (!(beta > 0.0)) throw std::invalid_argument("sgd.beta must be > 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("sgd.lambda must be >= 0");
    if (threads < 0) throw std::invalid_argument("sgd.threads must be >= 0");
}

// ---------------------------------------------------------------------------
// Risk evaluation
// ---------------------------------------------------------------------------

double exact_population_risk(const Activation& act, const DataModel& model, const WeightEnsemble& weights,
                             int threads) {
    if (!act.is_piecewise() || weights.relu()) throw std::invalid_argument("exact risk needs a piecewise activation");
    if (!model.isotropic()) throw std::invalid_argument("exact risk needs isotropic data");
    const int n = weights.n(), d = weights.d();
    std::vector<double> norms(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) norms[static_cast<std::size_t>(i)] = weights.norm(i);
    std::vector<double> rows(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), threads > 0 ? threads : default_threads(), [&](std::size_t i) {
        const double ri = norms[i];
        double row = 2.0 * n * v_eval(act, model.delta, ri) + u_angle(act, model.delta, ri, ri, 0.0);
        for (std::size_t j = i + 1; j < static_cast<std::size_t>(n); ++j) {
            const double rj = norms[j];
            double alpha = std::numbers::pi / 2;
            if (ri > 0.0 && rj > 0.0) {
                const double c = dot(weights.w(static_cast<int>(i)).data(), weights.w(static_cast<int>(j)).data(), d) /
                                 (ri * rj);
                alpha = std::acos(std::clamp(c, -1.0, 1.0));
            }
            row += 2.0 * u_angle(act, model.delta, ri, rj, alpha);
        }
        rows[i] = row;
    });
    return 1.0 + pairwise_sum(rows.data(), rows.size()) / (static_cast<double>(n) * n);
}

McRisk mc_risk(const Activation& act, const DataModel& model, const WeightEnsemble& weights, std::uint64_t n_samples,
               std::uint64_t seed, int threads) {
    if (n_samples < 2) throw std::invalid_argument("mc_risk needs at least 2 samples");
    if (model.d.is_infinite() || model.d.value() != weights.d())
        throw std::invalid_argument("weight dimension does not match the data model");
    constexpr std::uint64_t kChunk = 4096;
    const std::size_t chunks = static_cast<std::size_t>((n_samples + kChunk - 1) / kChunk);
    std::vector<double> sq(chunks), sq2(chunks), err(chunks);
    parallel_for(chunks, threads > 0 ? threads : default_threads(), [&](std::size_t c) {
        double y = 0.0;
        std::vector<double> x;
        double s1 = 0.0, s2 = 0.0, e = 0.0;
        const std::uint64_t lo = c * kChunk, hi = std::min(n_samples, lo + kChunk);
        for (std::uint64_t j = lo; j < hi; ++j) {
            CounterRng rng(seed, kTagRisk, j);
            sample_example(model, rng, y, x);
            const double yhat = weights.predict(act, x);
            const double l = (y - yhat) * (y - yhat);
            s1 += l;
            s2 += l * l;
            const double sign = yhat > 0.0 ? 1.0 : (yhat < 0.0 ? -1.0 : 0.0);
            if (sign != y) e += 1.0;
        }
        sq[c] = s1;
        sq2[c] = s2;
        err[c] = e;
    });
    const double n = static_cast<double>(n_samples);
    const double mean = pairwise_sum(sq.data(), chunks) / n;
    const double mean2 = pairwise_sum(sq2.data(), chunks) / n;
    const double var = std::max(mean2 - mean * mean, 0.0) * n / (n - 1.0);
    const double rate = pairwise_sum(err.data(), chunks) / n;
    return {mean, std::sqrt(var / n), rate, std::sqrt(rate * (1.0 - rate) / n)};
}

// ---------------------------------------------------------------------------
// SGD
// ---------------------------------------------------------------------------

namespace {

class SgdEngine {
public:
    SgdEngine(const DataModel& model, const Activation& act, const SgdConfig& cfg, WeightEnsemble& theta,
              const SgdObserver& observer, std::vector<SgdSummary>& out)
        : model_(model), act_(act), cfg_(cfg), theta_(theta), observer_(observer), out_(out),
          n_(theta.n()), d_(theta.d()), out_vals_(static_cast<std::size_t>(n_)), slope_(static_cast<std::size_t>(n_)),
          pre_(static_cast<std::size_t>(n_)), bad_(static_cast<std::size_t>(n_), 0) {
        checkpoints_ = cfg.checkpoints;
        std::sort(checkpoints_.begin(), checkpoints_.end());
        noisy_ = std::isfinite(cfg.beta);
    }

    void run() {
        record(0);
        if (cfg_.steps == 0) return;
        k_ = 1;
        prepare_step();
        const int workers =
            std::max(1, std::min(cfg_.threads > 0 ? cfg_.threads : default_threads(), n_));
        if (workers == 1) {
            while (!stop_) {
                forward(0, n_);
                after_forward();
                update(0, n_);
                after_update();
            }
        } else {
            run_parallel(workers);
        }
        if (error_) std::rethrow_exception(error_);
    }

private:
    void run_parallel(int workers) {
        auto f1 = [this]() noexcept { guarded([this] { after_forward(); }); };
        auto f2 = [this]() noexcept { guarded([this] { after_update(); }); };
        std::barrier b1(workers, f1);
        std::barrier b2(workers, f2);
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w) {
            const int lo = n_ * w / workers, hi = n_ * (w + 1) / workers;
            pool.emplace_back([&, lo, hi] {
                while (!stop_) {
                    guarded([&] { forward(lo, hi); });
                    b1.arrive_and_wait();
                    guarded([&] { update(lo, hi); });
                    b2.arrive_and_wait();
                }
            });
        }
    }

    template <class F>
    void guarded(F&& f) noexcept {
        try {
            f();
        } catch (...) {
            std::lock_guard lock(error_mutex_);
            if (!error_) error_ = std::current_exception();
            stop_ = true;
        }
    }

    void prepare_step() {
        CounterRng rng(cfg_.seed, kTagData, k_);
        sample_example(model_, rng, y_, x_);
        step_ = cfg_.epsilon * cfg_.schedule.step_factor(k_);
        shrink_ = 1.0 - 2.0 * cfg_.lambda * step_;
        noise_sd_ = noisy_ ? std::sqrt(2.0 * step_ / cfg_.beta) : 0.0;
    }

    void forward(int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            const auto k = static_cast<std::size_t>(i);
            const double z = dot(theta_.w(i).data(), x_.data(), d_);
            if (theta_.relu()) {
                pre_[k] = z + theta_.b(i);
                out_vals_[k] = theta_.a(i) * std::max(pre_[k], 0.0);
            } else {
                out_vals_[k] = sigma_eval(act_, z);
                slope_[k] = sigma_deriv(act_, z);
            }
        }
    }

    void after_forward() {
        const double yhat = pairwise_sum(out_vals_.data(), out_vals_.size()) / n_;
        coef_ = 2.0 * step_ * (y_ - yhat);
    }

    void update(int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            const auto k = static_cast<std::size_t>(i);
            double* w = theta_.w(i).data();
            double gx = 0.0;  // coefficient of x in the gradient step
            if (theta_.relu()) {
                if (pre_[k] > 0.0) {
                    const double a = theta_.a(i);
                    gx = coef_ * a;
                    theta_.a(i) = shrink_ * a + coef_ * pre_[k];
                    theta_.b(i) = shrink_ * theta_.b(i) + coef_ * a;
                } else {
                    theta_.a(i) *= shrink_;
                    theta_.b(i) *= shrink_;
                }
            } else {
                gx = coef_ * slope_[k];
            }
            if (shrink_ != 1.0)
                for (int c = 0; c < d_; ++c) w[c] = shrink_ * w[c] + gx * x_[static_cast<std::size_t>(c)];
            else if (gx != 0.0)
                for (int c = 0; c < d_; ++c) w[c] += gx * x_[static_cast<std::size_t>(c)];
            if (noisy_) {
                CounterRng rng(stream_key(stream_key(cfg_.seed, kTagNoise, static_cast<std::uint64_t>(i)), k_, 0));
                for (int c = 0; c < d_; ++c) w[c] += noise_sd_ * rng.normal();
                if (theta_.relu()) {
                    theta_.a(i) += noise_sd_ * rng.normal();
                    theta_.b(i) += noise_sd_ * rng.normal();
                }
            }
            double norm2 = dot(w, w, d_);
            if (theta_.relu()) norm2 += theta_.a(i) * theta_.a(i) + theta_.b(i) * theta_.b(i);
            bad_[k] = !(norm2 <= kDivergenceNorm * kDivergenceNorm);
        }
    }

    void after_update() {
        if (stop_) return;
        for (int i = 0; i < n_; ++i)
            if (bad_[static_cast<std::size_t>(i)])
                throw DivergenceError("SGD diverged at iteration " + std::to_string(k_) + ": unit " +
                                      std::to_string(i) + " exceeded the norm guard");
        if (wants_record(k_)) record(k_);
        if (k_ == cfg_.steps) {
            stop_ = true;
            return;
        }
        ++k_;
        prepare_step();
    }

    bool wants_record(std::uint64_t k) const {
        if (k == cfg_.steps) return true;
        if (cfg_.risk_eval_stride > 0 && k % cfg_.risk_eval_stride == 0) return true;
        return std::binary_search(checkpoints_.begin(), checkpoints_.end(), k);
    }

    void record(std::uint64_t k) {
        SgdSummary s;
        s.iteration = k;
        s.t = iteration_to_time(cfg_.schedule, cfg_.epsilon, k);
        s.radial = theta_.summarize(model_.s0);
        double norm_sum = 0.0;
        for (int i = 0; i < n_; ++i) norm_sum += theta_.norm(i);
        s.mean_norm = norm_sum / n_;
        if (theta_.relu()) {
            s.a_mean = s.radial.mean(0);
            s.b_mean = s.radial.mean(1);
            s.r1_mean = s.radial.mean(2);
            s.r2_mean = s.radial.mean(3);
        } else if (model_.s0) {
            s.r1_mean = s.radial.mean(0);
            s.r2_mean = s.radial.mean(1);
        }
        if (cfg_.exact_risk) s.risk_exact = exact_population_risk(act_, model_, theta_, cfg_.threads);
        if (cfg_.mc_samples > 0) {
            const McRisk mc = mc_risk(act_, model_, theta_, cfg_.mc_samples, stream_key(cfg_.seed, kTagRisk, k),
                                      cfg_.threads);
            s.risk_mc = mc.estimate;
            s.mc_se = mc.standard_error;
            s.error_rate = mc.error_rate;
        }
        if (observer_) observer_(s);
        out_.push_back(std::move(s));
    }

    const DataModel& model_;
    const Activation& act_;
    const SgdConfig& cfg_;
    WeightEnsemble& theta_;
    const SgdObserver& observer_;
    std::vector<SgdSummary>& out_;
    int n_, d_;
    std::vector<std::uint64_t> checkpoints_;
    bool noisy_ = false;

    std::uint64_t k_ = 0;
    std::vector<double> x_;
    double y_ = 0.0, step_ = 0.0, shrink_ = 1.0, noise_sd_ = 0.0, coef_ = 0.0;
    std::vector<double> out_vals_, slope_, pre_;
    std::vector<unsigned char> bad_;

    std::atomic<bool> stop_{false};
    std::mutex error_mutex_;
    std::exception_ptr error_;
};

} // namespace

SgdResult sgd_run(const DataModel& model, const Activation& act, const SgdConfig& cfg, const WeightEnsemble& init,
                  const SgdObserver& observer) {
    model.validate();
    cfg.validate();
    init.check_finite();
    if (model.d.is_infinite() || model.d.value() != init.d())
        throw std::invalid_argument("initial weights do not match the data dimension");
    if (init.relu() != (act.kind() == ActivationKind::ReluAffine))
        throw std::invalid_argument("weight layout does not match the activation kind");
    SgdResult result{{}, init};
    SgdEngine engine(model, act, cfg, result.final_weights, observer, result.trajectory);
    engine.run();
    return result;
}

} // namespace mf
