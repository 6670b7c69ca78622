#ifndef HELFRICH_STATS_HPP
#define HELFRICH_STATS_HPP

/// Small statistics kit for the Monte-Carlo checks.

#include <functional>
#include <vector>

namespace helfrich {

struct MeanSE {
  double mean = 0.0;
  double se = 0.0;
};

/// Sample mean with the iid standard error.
MeanSE mean_se(const std::vector<double>& v);

/// Mean with standard error from `n_batches` contiguous batch means.
MeanSE batch_means(const std::vector<double>& v, int n_batches);

double sample_variance(const std::vector<double>& v);

/// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_q(double lambda);

/// Two-sample Kolmogorov-Smirnov p-value.
double ks_two_sample(std::vector<double> a, std::vector<double> b);

/// One-sample Kolmogorov-Smirnov p-value against a continuous cdf.
double ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf);

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
};

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

double normal_cdf(double x);

}  // namespace helfrich

#endif
