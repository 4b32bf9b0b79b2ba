/**
 * @file verify.hpp
 * @brief Ensemble verification: ensemble-mean RMSE, unbiased CRPS,
 *        spread-skill ratio with finite-ensemble correction, scorecards.
 */
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "njord/domain.hpp"

namespace njord::verify {

struct MetricsConfig {
    int m_eval = 1;
    bool area_weighting = true;
    /// Multiplies the spread by sqrt((M+1)/M) before forming the ratio.
    bool finite_ensemble_correction = true;
};

/// members: M vectors of N cell values. weights: unit-mean per-cell weights
/// (nullptr -> uniform).
double ensemble_mean_rmse(const std::vector<std::vector<double>>& members,
                          const std::vector<double>& truth,
                          const std::vector<double>* weights);

/// Fair (alpha = 1) ensemble CRPS averaged over cells. With a single member
/// this reduces exactly to the MAE; `is_mae` reports that fallback.
double crps_unbiased(const std::vector<std::vector<double>>& members,
                     const std::vector<double>& truth,
                     const std::vector<double>* weights, bool* is_mae = nullptr);

struct SsrResult {
    double ssr = 0.0;
    double spread = 0.0;  // sqrt(weighted mean unbiased ensemble variance)
    double rmse = 0.0;
    bool infinite = false;  // zero RMSE sentinel
};

SsrResult spread_skill_ratio(const std::vector<std::vector<double>>& members,
                             const std::vector<double>& truth,
                             const std::vector<double>* weights, bool corrected = true);

struct MetricRow {
    std::string model;
    std::string variable;
    std::string depth;  // "surface" or depth in meters
    int lead_time_days = 0;
    double rmse = 0.0;
    double crps = 0.0;
    double ssr = 0.0;
    double spread = 0.0;
};

/// Per-(channel, lead-time) metrics of a forecast file against the truth
/// sequence it was initialized from.
std::vector<MetricRow> evaluate_forecast(const domain::ForecastFile& forecast,
                                         const domain::StateSequence& truth,
                                         const std::vector<double>& area_weight,
                                         const MetricsConfig& cfg,
                                         const std::string& model_label);

/// Persistence baseline: the initialization state repeated at every lead.
std::vector<MetricRow> evaluate_persistence(const domain::StateSequence& truth,
                                            int init_t, int n_lead,
                                            const std::vector<double>& area_weight,
                                            const MetricsConfig& cfg,
                                            const std::string& model_label);

/// CSV scorecard: model,variable,depth,lead_time_days,rmse,crps,ssr,spread.
void emit_scorecard(const std::vector<MetricRow>& rows, const std::string& path);
std::vector<MetricRow> load_scorecard(const std::string& path);

}  // namespace njord::verify
