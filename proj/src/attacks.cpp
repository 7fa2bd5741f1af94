#include "signshield/attacks.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>
#include <thread>

#include "signshield/errors.hpp"
#include "signshield/net.hpp"

namespace signshield {

Tensor ModelOracle::logits(const Tensor& x) const { return forward(model_.net, x); }

Tensor ModelOracle::grad(const Tensor& x, int y) const {
    return loss_and_input_gradient(model_.net, x, y).grad_input;
}

Tensor ModelOracle::logit_vjp(const Tensor& x, const Tensor& upstream) const {
    return signshield::logit_vjp(model_.net, x, upstream);
}

namespace {

float sign0(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

void require_unit_range(const Tensor& x) {
    for (float v : x.data) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw ParamError("attack input has values outside [0,1]");
        }
    }
}

int argmax_label(const Tensor& logits) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(logits.size()); ++i) {
        if (logits.at(i) > logits.at(best)) best = i;
    }
    return best;
}

AttackResult finish(const GradientOracle& oracle, const Tensor& x, int y, Tensor adversarial,
                    int iterations) {
    AttackResult r;
    r.success = argmax_label(oracle.logits(adversarial)) != y;
    r.linf_distortion = max_abs_diff(adversarial, x);
    Tensor delta = adversarial;
    for (std::size_t e = 0; e < delta.data.size(); ++e) delta.data[e] -= x.data[e];
    r.l2_distortion = l2_norm(delta);
    r.adversarial = std::move(adversarial);
    r.iterations = iterations;
    return r;
}

}  // namespace

AttackResult fgsm(const GradientOracle& oracle, const Tensor& x, int y, const FgsmConfig& cfg) {
    if (cfg.epsilon < 0.0f) throw ParamError("fgsm: epsilon must be >= 0");
    require_unit_range(x);
    const Tensor g = oracle.grad(x, y);
    Tensor adv = x;
    for (std::size_t e = 0; e < adv.data.size(); ++e) {
        adv.data[e] = clamp01(adv.data[e] + cfg.epsilon * sign0(g.data[e]));
    }
    return finish(oracle, x, y, std::move(adv), 1);
}

AttackResult mim(const GradientOracle& oracle, const Tensor& x, int y, const MimConfig& cfg,
                 std::vector<Tensor>* trace) {
    if (cfg.epsilon < 0.0f) throw ParamError("mim: epsilon must be >= 0");
    if (cfg.steps < 1) throw ParamError("mim: steps must be >= 1");
    if (cfg.decay < 0.0f) throw ParamError("mim: decay must be >= 0");
    const float alpha =
        cfg.alpha > 0.0f ? cfg.alpha : cfg.epsilon / static_cast<float>(cfg.steps);
    if (!(alpha > 0.0f)) throw ParamError("mim: resolved step size must be positive");
    require_unit_range(x);

    Tensor adv = x;
    Tensor momentum = Tensor::zeros(x.shape);
    for (int t = 0; t < cfg.steps; ++t) {
        const Tensor g = oracle.grad(adv, y);
        double l1 = 0.0;
        for (float v : g.data) l1 += std::fabs(static_cast<double>(v));
        const float l1f = static_cast<float>(l1);
        for (std::size_t e = 0; e < momentum.data.size(); ++e) {
            const float normalized = l1f > 0.0f ? g.data[e] / l1f : 0.0f;
            momentum.data[e] = cfg.decay * momentum.data[e] + normalized;
        }
        for (std::size_t e = 0; e < adv.data.size(); ++e) {
            adv.data[e] = clamp01(adv.data[e] + alpha * sign0(momentum.data[e]));
        }
        if (trace != nullptr) trace->push_back(adv);
    }
    return finish(oracle, x, y, std::move(adv), cfg.steps);
}

AttackResult pgd(const GradientOracle& oracle, const Tensor& x, int y, const PgdConfig& cfg,
                 Rng& rng, std::vector<Tensor>* trace) {
    if (cfg.epsilon < 0.0f) throw ParamError("pgd: epsilon must be >= 0");
    if (cfg.steps < 1) throw ParamError("pgd: steps must be >= 1");
    const float alpha =
        cfg.alpha > 0.0f ? cfg.alpha : 2.5f * cfg.epsilon / static_cast<float>(cfg.steps);
    if (!(alpha > 0.0f)) throw ParamError("pgd: resolved step size must be positive");
    require_unit_range(x);

    auto project = [&](Tensor& adv) {
        for (std::size_t e = 0; e < adv.data.size(); ++e) {
            const float lo = std::max(0.0f, x.data[e] - cfg.epsilon);
            const float hi = std::min(1.0f, x.data[e] + cfg.epsilon);
            adv.data[e] = std::min(hi, std::max(lo, adv.data[e]));
        }
    };

    Tensor adv = x;
    if (cfg.random_start) {
        for (float& v : adv.data) v += rng.uniform(-cfg.epsilon, cfg.epsilon);
        project(adv);
    }
    if (trace != nullptr) trace->push_back(adv);
    for (int t = 0; t < cfg.steps; ++t) {
        const Tensor g = oracle.grad(adv, y);
        for (std::size_t e = 0; e < adv.data.size(); ++e) {
            adv.data[e] += alpha * sign0(g.data[e]);
        }
        project(adv);
        if (trace != nullptr) trace->push_back(adv);
    }
    return finish(oracle, x, y, std::move(adv), cfg.steps);
}

Tensor cw_encode(const Tensor& x) {
    Tensor w = x;
    for (float& v : w.data) {
        const float clipped = std::min(1.0f - 1e-6f, std::max(1e-6f, v));
        v = std::atanh(2.0f * clipped - 1.0f);
    }
    return w;
}

Tensor cw_decode(const Tensor& w) {
    Tensor x = w;
    for (float& v : x.data) v = 0.5f * (std::tanh(v) + 1.0f);
    return x;
}

namespace {

struct CwRun {
    Tensor best_adv;
    float best_l2 = 0.0f;
    int best_iteration = 0;
    bool found = false;
    Tensor final_adv;
    int iterations = 0;
};

struct CwEval {
    float margin = 0.0f;
    int runner = 0;
    std::vector<int> logits_shape;
};

CwRun cw_optimize(const GradientOracle& oracle, const Tensor& x, int y, float c,
                  const CwConfig& cfg, std::vector<CwIterate>* trace) {
    Tensor w = cw_encode(x);
    CwRun run;

    auto evaluate = [&](const Tensor& adv, int iteration) -> CwEval {
        const Tensor z = oracle.logits(adv);
        const int label = argmax_label(z);
        int runner = y == 0 ? 1 : 0;
        for (int i = 0; i < static_cast<int>(z.size()); ++i) {
            if (i != y && z.at(i) > z.at(runner)) runner = i;
        }
        Tensor delta = adv;
        for (std::size_t e = 0; e < delta.data.size(); ++e) delta.data[e] -= x.data[e];
        const float l2 = l2_norm(delta);
        const bool success = label != y;
        if (success && (!run.found || l2 < run.best_l2)) {
            run.found = true;
            run.best_l2 = l2;
            run.best_adv = adv;
            run.best_iteration = iteration;
        }
        if (trace != nullptr) trace->push_back({success, l2});
        return {z.at(y) - z.at(runner), runner, z.shape};
    };

    for (int t = 0; t < cfg.max_iterations; ++t) {
        const Tensor adv = cw_decode(w);
        const CwEval eval = evaluate(adv, t);
        // d(objective)/d(adv): 2*delta from the distance term, plus the
        // margin gradient while the hinge is active.
        Tensor grad_adv = adv;
        for (std::size_t e = 0; e < grad_adv.data.size(); ++e) {
            grad_adv.data[e] = 2.0f * (adv.data[e] - x.data[e]);
        }
        if (eval.margin > -cfg.confidence) {
            Tensor upstream = Tensor::zeros(eval.logits_shape);
            upstream.at(y) = 1.0f;
            upstream.at(eval.runner) = -1.0f;
            const Tensor margin_grad = oracle.logit_vjp(adv, upstream);
            for (std::size_t e = 0; e < grad_adv.data.size(); ++e) {
                grad_adv.data[e] += c * margin_grad.data[e];
            }
        }
        // chain through adv = 0.5*(tanh(w)+1): d(adv)/d(w) = 2*adv*(1-adv)
        for (std::size_t e = 0; e < w.data.size(); ++e) {
            const float dadv_dw = 2.0f * adv.data[e] * (1.0f - adv.data[e]);
            w.data[e] -= cfg.learning_rate * grad_adv.data[e] * dadv_dw;
        }
    }
    run.final_adv = cw_decode(w);
    evaluate(run.final_adv, cfg.max_iterations);
    run.iterations = cfg.max_iterations;
    return run;
}

}  // namespace

AttackResult cw_l2(const GradientOracle& oracle, const Tensor& x, int y, const CwConfig& cfg,
                   std::vector<CwIterate>* trace) {
    if (cfg.c < 0.0f) throw ParamError("cw_l2: c must be >= 0");
    if (cfg.max_iterations < 1) throw ParamError("cw_l2: max iterations must be >= 1");
    if (!(cfg.learning_rate > 0.0f)) throw ParamError("cw_l2: learning rate must be positive");
    require_unit_range(x);

    std::vector<float> constants = cfg.search_c ? std::vector<float>{0.01f, 0.1f, 1.0f, 10.0f}
                                                : std::vector<float>{cfg.c};
    bool found = false;
    Tensor best_adv;
    float best_l2 = 0.0f;
    Tensor last_final;
    int total_iterations = 0;
    for (float c : constants) {
        CwRun run = cw_optimize(oracle, x, y, c, cfg, trace);
        total_iterations += run.iterations;
        if (run.found && (!found || run.best_l2 < best_l2)) {
            found = true;
            best_adv = run.best_adv;
            best_l2 = run.best_l2;
        }
        last_final = std::move(run.final_adv);
    }
    return finish(oracle, x, y, found ? std::move(best_adv) : std::move(last_final),
                  total_iterations);
}

AttackResult run_attack(const GradientOracle& oracle, const Tensor& x, int y,
                        const AttackConfig& cfg, Rng& rng) {
    switch (cfg.kind) {
        case AttackKind::Fgsm:
            return fgsm(oracle, x, y, cfg.fgsm);
        case AttackKind::Mim:
            return mim(oracle, x, y, cfg.mim);
        case AttackKind::Pgd:
            return pgd(oracle, x, y, cfg.pgd, rng);
        case AttackKind::CwL2:
            return cw_l2(oracle, x, y, cfg.cw);
    }
    throw ParamError("run_attack: unknown attack kind");
}

std::vector<AttackResult> attack_batch(const GradientOracle& oracle,
                                       const std::vector<LabeledImage>& dataset,
                                       const AttackConfig& cfg, std::uint64_t seed, int workers) {
    if (workers < 1) throw ParamError("attack_batch: workers must be >= 1");
    const std::size_t n = dataset.size();
    std::vector<AttackResult> out(n);
    std::vector<std::string> errors(n);
    std::atomic<std::size_t> next{0};
    const Rng master(seed);

    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                Rng rng = master.child(static_cast<std::uint64_t>(i));
                out[i] = run_attack(oracle, dataset[i].image, dataset[i].label, cfg, rng);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };

    const int thread_count =
        static_cast<int>(std::min<std::size_t>(std::min(workers, 64), std::max<std::size_t>(n, 1)));
    if (thread_count <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(thread_count));
        for (int t = 0; t < thread_count; ++t) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }

    std::string aggregate;
    for (std::size_t i = 0; i < n; ++i) {
        if (!errors[i].empty()) {
            if (!aggregate.empty()) aggregate += "; ";
            aggregate += "image " + std::to_string(i) + ": " + errors[i];
        }
    }
    if (!aggregate.empty()) throw Error("attack_batch: " + aggregate);
    return out;
}

}  // namespace signshield
