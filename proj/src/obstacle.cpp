#include "mfr/obstacle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfr/errors.hpp"
#include "mfr/parallel.hpp"
#include "mfr/rng.hpp"

namespace mfr {

void validate_obstacle(const ObstacleFunctional& H) {
    if (!H.eval || !H.grad_y || !H.lions_grad)
        throw ValidationError("obstacle functional needs eval, grad_y and lions_grad");
    if (H.dim < 1) throw ValidationError("obstacle dimension must be >= 1");
    if (!(H.beta > 0.0))
        throw ValidationError("obstacle beta must be positive: the y-gradient must stay away from zero");
    if (H.bound_M < H.beta)
        throw ValidationError("obstacle bound_M cannot be smaller than beta");
    if (H.lip_L < 0.0) throw ValidationError("obstacle lip_L must be nonnegative");
    if (H.delta0 && !(*H.delta0 > 0.0 && *H.delta0 <= 1.0))
        throw ValidationError("obstacle delta0 must lie in (0, 1]");
}

double h_minus(const ObstacleFunctional& H, const Point& y, const EmpiricalMeasure& mu) {
    return std::max(0.0, -H.eval(y, mu));
}

std::vector<Point> reflection_increment(const ObstacleFunctional& H,
                                        const std::vector<Point>& cloud,
                                        const EmpiricalMeasure& mu,
                                        const std::vector<double>& k,
                                        unsigned threads) {
    const auto n = cloud.size();
    if (k.size() != n)
        throw ValidationError("reflection_increment: cloud and rate vector sizes differ");
    std::vector<Point> out(n);
    if (n == 0) return out;
    if (H.lions_y_invariant) {
        double kbar = 0.0;
        for (double kv : k) kbar += kv;
        kbar /= static_cast<double>(n);
        const Point& any = cloud[0];
        parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i)
                out[i] = H.grad_y(cloud[i], mu) * k[i] +
                         H.lions_grad(any, mu, cloud[i]) * kbar;
        });
        return out;
    }
    parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            Point acc = Point::Zero(cloud[i].size());
            for (std::size_t j = 0; j < n; ++j)
                acc += H.lions_grad(cloud[j], mu, cloud[i]) * k[j];
            out[i] = H.grad_y(cloud[i], mu) * k[i] + acc / static_cast<double>(n);
        }
    });
    return out;
}

Point lions_grad_fd(const ObstacleFunctional& H, const Point& y,
                    const EmpiricalMeasure& mu, int index, double eps) {
    if (index < 0 || index >= mu.size())
        throw ValidationError("lions_grad_fd: atom index out of range");
    const int n = mu.dim();
    Point out(n);
    std::vector<Point> atoms = mu.atoms();
    for (int c = 0; c < n; ++c) {
        Point saved = atoms[static_cast<std::size_t>(index)];
        atoms[static_cast<std::size_t>(index)][c] = saved[c] + eps;
        double up = H.eval(y, EmpiricalMeasure(atoms));
        atoms[static_cast<std::size_t>(index)][c] = saved[c] - eps;
        double dn = H.eval(y, EmpiricalMeasure(atoms));
        atoms[static_cast<std::size_t>(index)] = saved;
        out[c] = (up - dn) / (2.0 * eps) * mu.size();
    }
    return out;
}

ObstacleFunctional make_affine(const Point& alpha, double a, const Point& alpha_prime,
                               double b, std::optional<double> delta0) {
    if (alpha.size() < 1 || alpha_prime.size() != alpha.size())
        throw ValidationError("affine obstacle: alpha and alpha_prime must share a dimension >= 1");
    double an = alpha.norm();
    if (!(an > 0.0))
        throw ValidationError("affine obstacle needs |alpha| > 0: the y-gradient must stay away from zero");
    Point mean_coeff = a * alpha_prime;
    ObstacleFunctional H;
    H.dim = static_cast<int>(alpha.size());
    H.eval = [alpha, mean_coeff, b](const Point& y, const EmpiricalMeasure& mu) {
        return alpha.dot(y) + mean_coeff.dot(mu.mean()) + b;
    };
    H.grad_y = [alpha](const Point&, const EmpiricalMeasure&) { return alpha; };
    H.lions_grad = [mean_coeff](const Point&, const EmpiricalMeasure&, const Point&) {
        return mean_coeff;
    };
    int n = H.dim;
    H.hess_yy = [n](const Point&, const EmpiricalMeasure&) { return Matrix::Zero(n, n); };
    H.grad_v_lions = [n](const Point&, const EmpiricalMeasure&, const Point&) {
        return Matrix::Zero(n, n);
    };
    H.beta = an;
    H.bound_M = an + mean_coeff.norm();
    H.lip_L = 0.0;
    if (delta0) {
        H.delta0 = delta0;
    } else {
        double ratio = mean_coeff.norm() / an;
        if (ratio < 1.0) H.delta0 = 1.0 - ratio;
    }
    H.lions_y_invariant = true;
    H.kind = "affine";
    validate_obstacle(H);
    return H;
}

ObstacleFunctional make_separable(SmoothScalarField outer, SmoothScalarFunction link,
                                  SmoothScalarField inner, int dim, double beta,
                                  double bound_M, double lip_L,
                                  std::optional<double> delta0) {
    if (!outer.value || !outer.grad || !link.value || !link.deriv || !inner.value || !inner.grad)
        throw ValidationError("separable obstacle: outer, link and inner need values and first derivatives");
    auto inner_mean = [inner](const EmpiricalMeasure& mu) {
        double e = 0.0;
        for (const auto& atom : mu.atoms()) e += inner.value(atom);
        return e / mu.size();
    };
    ObstacleFunctional H;
    H.dim = dim;
    H.eval = [outer, link, inner_mean](const Point& y, const EmpiricalMeasure& mu) {
        return outer.value(y) + link.value(inner_mean(mu));
    };
    H.grad_y = [outer](const Point& y, const EmpiricalMeasure&) { return outer.grad(y); };
    H.lions_grad = [link, inner, inner_mean](const Point&, const EmpiricalMeasure& mu,
                                             const Point& v) {
        return Point(link.deriv(inner_mean(mu)) * inner.grad(v));
    };
    if (outer.hess)
        H.hess_yy = [outer](const Point& y, const EmpiricalMeasure&) { return outer.hess(y); };
    if (inner.hess)
        H.grad_v_lions = [link, inner, inner_mean](const Point&, const EmpiricalMeasure& mu,
                                                   const Point& v) {
            return Matrix(link.deriv(inner_mean(mu)) * inner.hess(v));
        };
    H.beta = beta;
    H.bound_M = bound_M;
    H.lip_L = lip_L;
    H.delta0 = delta0;
    H.lions_y_invariant = true;
    H.kind = "separable";
    validate_obstacle(H);
    return H;
}

void Witness::put(const std::string& name, const Point& p) {
    items.emplace_back(name, std::vector<double>(p.data(), p.data() + p.size()));
}

void Witness::put_measure(const std::string& name, const EmpiricalMeasure& mu) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(mu.size()) * mu.dim());
    for (const auto& a : mu.atoms()) flat.insert(flat.end(), a.data(), a.data() + a.size());
    items.emplace_back(name, std::move(flat));
}

bool AssumptionReport::all_pass() const {
    return std::all_of(conditions.begin(), conditions.end(), [](const ConditionCheck& c) {
        return c.status != ConditionStatus::fail;
    });
}

const ConditionCheck& AssumptionReport::by_id(const std::string& id) const {
    for (const auto& c : conditions)
        if (c.id == id) return c;
    throw ValidationError("unknown condition id: " + id);
}

namespace {

Matrix fd_hess_yy(const ObstacleFunctional& H, const Point& y, const EmpiricalMeasure& mu) {
    const int n = static_cast<int>(y.size());
    double eps = 1e-4 * (1.0 + y.cwiseAbs().maxCoeff());
    Matrix out(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            Point pp = y, pm = y, mp = y, mm = y;
            pp[i] += eps; pp[j] += eps;
            pm[i] += eps; pm[j] -= eps;
            mp[i] -= eps; mp[j] += eps;
            mm[i] -= eps; mm[j] -= eps;
            out(i, j) = (H.eval(pp, mu) - H.eval(pm, mu) - H.eval(mp, mu) + H.eval(mm, mu)) /
                        (4.0 * eps * eps);
        }
    }
    return out;
}

Matrix fd_grad_v_lions(const ObstacleFunctional& H, const Point& y,
                       const EmpiricalMeasure& mu, const Point& v) {
    const int n = static_cast<int>(v.size());
    double eps = 1e-5 * (1.0 + v.cwiseAbs().maxCoeff());
    Matrix out(n, n);
    for (int c = 0; c < n; ++c) {
        Point up = v, dn = v;
        up[c] += eps;
        dn[c] -= eps;
        out.col(c) = (H.lions_grad(y, mu, up) - H.lions_grad(y, mu, dn)) / (2.0 * eps);
    }
    return out;
}

struct WorstTracker {
    double best = std::numeric_limits<double>::infinity();
    Witness witness;

    template <typename Fill>
    void offer(double value, Fill&& fill) {
        if (value < best) {
            best = value;
            witness = Witness{};
            fill(witness);
        }
    }
};

} // namespace

AssumptionReport check_assumptions(const ObstacleFunctional& H, const SampleDomain& domain,
                                   int n_samples, std::uint64_t seed, double tol) {
    validate_obstacle(H);
    const int n = H.dim;
    if (domain.lo.size() != n || domain.hi.size() != n)
        throw ValidationError("sample domain box dimension does not match the obstacle");
    if ((domain.hi - domain.lo).minCoeff() <= 0.0)
        throw ValidationError("sample domain box must have positive extent");
    if (domain.min_atoms < 1 || domain.max_atoms < domain.min_atoms)
        throw ValidationError("sample domain atom counts are inconsistent");
    if (domain.max_atoms > 64)
        throw ValidationError("sample domain atom count exceeds the exact-W2 cap of 64");
    if (n_samples < 1) throw ValidationError("check_assumptions needs n_samples >= 1");

    const double tol_analytic = tol > 0.0 ? tol : 1e-8;
    const bool fd_13 = !H.hess_yy || !H.grad_v_lions;
    const double tol_13 = tol > 0.0 ? tol : (fd_13 ? 1e-4 : 1e-8);

    CounterRng rng(seed, kStreamChecker);
    auto draw_point = [&] {
        Point p(n);
        for (int c = 0; c < n; ++c) p[c] = rng.uniform(domain.lo[c], domain.hi[c]);
        return p;
    };
    auto draw_cloud = [&](int na) {
        std::vector<Point> atoms;
        atoms.reserve(static_cast<std::size_t>(na));
        for (int i = 0; i < na; ++i) atoms.push_back(draw_point());
        return atoms;
    };

    WorstTracker t12, t13, t14, t15, t16, t38;
    double jiggle = 1e-2 * (domain.hi - domain.lo).maxCoeff();

    for (int s = 0; s < n_samples; ++s) {
        int na = domain.min_atoms +
                 static_cast<int>(rng.below(static_cast<std::uint32_t>(domain.max_atoms - domain.min_atoms + 1)));
        Point y1 = draw_point(), y2 = draw_point(), v = draw_point();
        std::vector<Point> atoms1 = draw_cloud(na);
        std::vector<Point> atoms2;
        if (s % 2 == 0) {
            atoms2 = draw_cloud(na);
        } else {
            // nearby cloud: probes the local Lipschitz behaviour tightly
            atoms2 = atoms1;
            for (auto& a : atoms2)
                for (int c = 0; c < n; ++c) a[c] += rng.uniform(-jiggle, jiggle);
        }
        EmpiricalMeasure mu1(atoms1), mu2(atoms2);

        Point g1 = H.grad_y(y1, mu1);
        Point g2 = H.grad_y(y2, mu2);
        Point l1v = H.lions_grad(y1, mu1, v);
        Point l2v = H.lions_grad(y2, mu2, v);

        t12.offer(g1.norm() - H.beta, [&](Witness& w) {
            w.put("y", y1);
            w.put_measure("mu", mu1);
        });

        Matrix hy = H.hess_yy ? H.hess_yy(y1, mu1) : fd_hess_yy(H, y1, mu1);
        Matrix gv = H.grad_v_lions ? H.grad_v_lions(y1, mu1, v) : fd_grad_v_lions(H, y1, mu1, v);
        double total13 = g1.norm() + hy.norm() + l1v.norm() + gv.norm();
        t13.offer(H.bound_M - total13, [&](Witness& w) {
            w.put("y", y1);
            w.put_measure("mu", mu1);
            w.put("v", v);
        });

        double lhs_a = (g1 - g2).norm();
        double rhs_a = H.lip_L * ((y1 - y2).norm() + w2_exact_small(mu1, mu2));
        double lhs_b = 0.0, rhs_b = (y1 - y2).squaredNorm();
        for (int i = 0; i < na; ++i) {
            lhs_b += (H.lions_grad(y1, mu1, mu1.atom(i)) - H.lions_grad(y2, mu2, mu2.atom(i)))
                         .squaredNorm();
            rhs_b += (mu1.atom(i) - mu2.atom(i)).squaredNorm() / na;
        }
        lhs_b /= na;
        rhs_b *= H.lip_L;
        double m14 = std::min(rhs_a - lhs_a, rhs_b - lhs_b);
        t14.offer(m14, [&](Witness& w) {
            w.put("y", y1);
            w.put_measure("mu", mu1);
            w.put("y2", y2);
            w.put_measure("mu2", mu2);
        });

        double p1 = g1.dot(l2v);
        double p2 = l1v.dot(l2v);
        t15.offer(std::min(p1, p2), [&](Witness& w) {
            w.put("y", y1);
            w.put_measure("mu", mu1);
            w.put("y2", y2);
            w.put_measure("mu2", mu2);
            w.put("v", v);
        });

        double lhs16 = H.eval(y2, mu2) - H.eval(y1, mu1);
        double rhs16 = g1.dot(y2 - y1);
        for (int i = 0; i < na; ++i)
            rhs16 += H.lions_grad(y1, mu1, mu1.atom(i)).dot(mu2.atom(i) - mu1.atom(i)) / na;
        t16.offer(rhs16 - lhs16, [&](Witness& w) {
            w.put("y", y1);
            w.put_measure("mu", mu1);
            w.put("y2", y2);
            w.put_measure("mu2", mu2);
        });

        Point mean_lions = Point::Zero(n);
        for (int i = 0; i < na; ++i) mean_lions += H.lions_grad(y1, mu1, mu1.atom(i));
        mean_lions /= static_cast<double>(na);
        double ratio = mean_lions.norm() / std::max(g1.norm(), 1e-300);
        double thr38 = H.delta0 ? (1.0 - *H.delta0) : 1.0;
        t38.offer(thr38 - ratio, [&](Witness& w) {
            w.put("y", y1);
            w.put_measure("mu", mu1);
        });
    }

    AssumptionReport report;
    auto emit = [&report](const std::string& id, const WorstTracker& t, bool pass,
                          const std::string& note) {
        ConditionCheck c;
        c.id = id;
        c.status = pass ? ConditionStatus::pass : ConditionStatus::fail;
        c.margin = t.best;
        c.witness = t.witness;
        c.note = note;
        report.conditions.push_back(std::move(c));
    };

    emit("bound_12", t12, t12.best >= -tol_analytic,
         "smallest |grad_y| - beta over samples");
    emit("bound_13", t13, t13.best >= -tol_13,
         fd_13 ? "derivative sum vs bound_M; finite differences used for missing second derivatives"
               : "derivative sum vs bound_M with Frobenius norms");
    emit("lipschitz_14", t14, t14.best >= -tol_analytic,
         "worst slack across both Lipschitz lines on sampled couplings");
    emit("sign_15", t15, t15.best >= -tol_analytic,
         "smallest of grad_y.lions_grad and lions_grad.lions_grad across sampled pairs");
    emit("concavity_16", t16, t16.best >= -tol_analytic,
         "two-point concavity slack along sampled couplings");
    if (H.delta0) {
        emit("strict_38", t38, t38.best >= -tol_analytic,
             "mean lions_grad vs (1 - delta0)|grad_y| with declared delta0");
    } else {
        emit("strict_38", t38, t38.best > tol_analytic,
             "no strictness gap declared; requiring |E[lions_grad]| strictly below |grad_y|");
    }
    return report;
}

} // namespace mfr
