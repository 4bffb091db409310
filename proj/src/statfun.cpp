#include "matchri/statfun.h"

#include <cmath>
#include <limits>
#include <numbers>

#include "matchri/error.h"

namespace matchri::statfun {

namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
constexpr int kMaxIter = 10000;

double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// Wichura's AS241 (PPND16), about 1e-16 relative accuracy.
double as241(double p) {
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                    45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                    21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    double r = std::sqrt(-std::log(q < 0 ? p : 1.0 - p));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((r * 7.7454501427834140764e-4 + .0227238449892691845833) * r + .24178072517745061177) * r +
                   1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
                4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + .0151986665636164571966) * r +
                   .14810397642748007459) * r + .68976733498510000455) * r + 1.6763848301838038494) * r +
                2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + .0012426609473880784386) * r +
                   .026532189526576123093) * r + .29656057182850489123) * r + 1.7848265399172913358) * r +
                5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                   7.868691311456132591e-4) * r + .0148753612908506148525) * r + .13692988092273580531) * r +
                .59983220655588793769) * r + 1.0);
    }
    return q < 0 ? -val : val;
}

double log_gamma_prefactor(double a, double z) { return -z + a * std::log(z) - std::lgamma(a); }

double lower_series(double a, double z) {
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int n = 0; n < kMaxIter; ++n) {
        ap += 1.0;
        del *= z / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * kEps) {
            break;
        }
    }
    return sum * std::exp(log_gamma_prefactor(a, z));
}

// Upper tail Q(a, z) by the modified Lentz algorithm.
double upper_continued_fraction(double a, double z) {
    double b = z + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) {
            break;
        }
    }
    return std::exp(log_gamma_prefactor(a, z)) * h;
}

double chi2_pdf(double x, int dof) {
    const double k = 0.5 * dof;
    if (x <= 0.0) {
        return 0.0;
    }
    return std::exp((k - 1.0) * std::log(x) - 0.5 * x - k * std::numbers::ln2 - std::lgamma(k));
}

}  // namespace

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double norm_quantile(double u) {
    if (!(u > 0.0 && u < 1.0)) {
        throw ConfigError("norm_quantile: probability must lie in (0, 1)");
    }
    double x = as241(u);
    // One Newton step against the erfc-based CDF.
    const double pdf = norm_pdf(x);
    if (pdf > 0.0) {
        x -= (norm_cdf(x) - u) / pdf;
    }
    return x;
}

double reg_lower_gamma(double a, double z) {
    if (!(a > 0.0) || !(z >= 0.0) || std::isnan(z)) {
        throw ConfigError("reg_lower_gamma: requires a > 0 and z >= 0");
    }
    if (z == 0.0) {
        return 0.0;
    }
    if (std::isinf(z)) {
        return 1.0;
    }
    if (z < a + 1.0) {
        return std::min(1.0, lower_series(a, z));
    }
    return std::max(0.0, 1.0 - upper_continued_fraction(a, z));
}

double chi2_cdf(double x, int dof) {
    if (dof < 1) {
        throw ConfigError("chi2_cdf: degrees of freedom must be positive");
    }
    if (x <= 0.0) {
        return 0.0;
    }
    return reg_lower_gamma(0.5 * dof, 0.5 * x);
}

double chi2_quantile(double u, int dof) {
    if (!(u > 0.0 && u < 1.0)) {
        throw ConfigError("chi2_quantile: probability must lie in (0, 1)");
    }
    if (dof < 1) {
        throw ConfigError("chi2_quantile: degrees of freedom must be positive");
    }
    double lo = 0.0;
    double hi = std::max(1.0, static_cast<double>(dof));
    while (chi2_cdf(hi, dof) < u) {
        lo = hi;
        hi *= 2.0;
    }
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (chi2_cdf(mid, dof) < u) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    double x = 0.5 * (lo + hi);
    for (int i = 0; i < 3; ++i) {
        const double pdf = chi2_pdf(x, dof);
        if (!(pdf > 0.0)) break;
        const double next = x - (chi2_cdf(x, dof) - u) / pdf;
        if (!(next > lo && next < hi)) break;
        x = next;
    }
    return x;
}

double chi2_transform(double x, int dof) {
    const double u = norm_cdf(x);
    // Clamp to the open interval; |x| beyond ~38 saturates the normal CDF.
    constexpr double kLo = std::numeric_limits<double>::min();
    const double clamped = std::min(std::max(u, kLo), 1.0 - std::numeric_limits<double>::epsilon() / 2);
    return (chi2_quantile(clamped, dof) - dof) / std::sqrt(2.0 * dof);
}

}  // namespace matchri::statfun
