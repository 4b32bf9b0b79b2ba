#include "njord/verify.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace njord::verify {

namespace {

void check_shapes(const std::vector<std::vector<double>>& members,
                  const std::vector<double>& truth, const std::vector<double>* weights) {
    if (members.empty()) throw std::invalid_argument("no ensemble members");
    if (truth.empty()) throw std::invalid_argument("empty truth field");
    for (const auto& m : members) {
        if (m.size() != truth.size()) {
            throw std::invalid_argument("member/truth size mismatch");
        }
    }
    if (weights && weights->size() != truth.size()) {
        throw std::invalid_argument("weight/truth size mismatch");
    }
}

double weight_at(const std::vector<double>* weights, size_t i) {
    return weights ? (*weights)[i] : 1.0;
}

double weight_sum(const std::vector<double>* weights, size_t n) {
    if (!weights) return static_cast<double>(n);
    double s = 0.0;
    for (double w : *weights) s += w;
    return s;
}

}  // namespace

double ensemble_mean_rmse(const std::vector<std::vector<double>>& members,
                          const std::vector<double>& truth,
                          const std::vector<double>* weights) {
    check_shapes(members, truth, weights);
    const size_t n = truth.size();
    const double wsum = weight_sum(weights, n);
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (const auto& m : members) mean += m[i];
        mean /= static_cast<double>(members.size());
        const double e = mean - truth[i];
        acc += weight_at(weights, i) * e * e;
    }
    return std::sqrt(acc / wsum);
}

double crps_unbiased(const std::vector<std::vector<double>>& members,
                     const std::vector<double>& truth,
                     const std::vector<double>* weights, bool* is_mae) {
    check_shapes(members, truth, weights);
    const int m = static_cast<int>(members.size());
    if (is_mae) *is_mae = (m == 1);
    const size_t n = truth.size();
    const double wsum = weight_sum(weights, n);
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double skill = 0.0;
        for (const auto& mem : members) skill += std::abs(mem[i] - truth[i]);
        skill /= m;
        double cell = skill;
        if (m >= 2) {
            double spread = 0.0;
            for (int a = 0; a < m; ++a) {
                for (int b = 0; b < m; ++b) spread += std::abs(members[a][i] - members[b][i]);
            }
            cell -= spread / (2.0 * m * (m - 1));
        }
        acc += weight_at(weights, i) * cell;
    }
    return acc / wsum;
}

SsrResult spread_skill_ratio(const std::vector<std::vector<double>>& members,
                             const std::vector<double>& truth,
                             const std::vector<double>* weights, bool corrected) {
    check_shapes(members, truth, weights);
    const int m = static_cast<int>(members.size());
    if (m < 2) throw std::invalid_argument("spread_skill_ratio needs >= 2 members");
    const size_t n = truth.size();
    const double wsum = weight_sum(weights, n);
    double var_acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (const auto& mem : members) mean += mem[i];
        mean /= m;
        double var = 0.0;
        for (const auto& mem : members) var += (mem[i] - mean) * (mem[i] - mean);
        var /= (m - 1);
        var_acc += weight_at(weights, i) * var;
    }
    SsrResult out;
    out.spread = std::sqrt(var_acc / wsum);
    out.rmse = ensemble_mean_rmse(members, truth, weights);
    const double factor =
        corrected ? std::sqrt((static_cast<double>(m) + 1.0) / m) : 1.0;
    if (out.rmse == 0.0) {
        out.infinite = true;
        out.ssr = std::numeric_limits<double>::infinity();
    } else {
        out.ssr = factor * out.spread / out.rmse;
    }
    return out;
}

namespace {

std::string depth_label(const domain::ChannelSpec& ch) {
    if (ch.surface) return "surface";
    std::ostringstream ss;
    ss << ch.depth_m;
    return ss.str();
}

}  // namespace

std::vector<MetricRow> evaluate_forecast(const domain::ForecastFile& forecast,
                                         const domain::StateSequence& truth,
                                         const std::vector<double>& area_weight,
                                         const MetricsConfig& cfg,
                                         const std::string& model_label) {
    if (truth.n_grid != forecast.n_grid) {
        throw std::invalid_argument("forecast/truth grid size mismatch");
    }
    if (forecast.init_time + forecast.n_lead >= truth.n_time) {
        throw std::invalid_argument("truth sequence too short for the forecast leads");
    }
    const std::vector<double>* w = cfg.area_weighting ? &area_weight : nullptr;
    std::vector<MetricRow> rows;
    for (int c = 0; c < forecast.registry.size(); ++c) {
        for (int lead = 1; lead <= forecast.n_lead; ++lead) {
            std::vector<std::vector<double>> members(
                forecast.n_members, std::vector<double>(forecast.n_grid));
            for (int m = 0; m < forecast.n_members; ++m) {
                for (int n = 0; n < forecast.n_grid; ++n) {
                    members[m][n] = forecast.at(m, lead - 1, n, c);
                }
            }
            std::vector<double> tru(forecast.n_grid);
            for (int n = 0; n < forecast.n_grid; ++n) {
                tru[n] = truth.at(forecast.init_time + lead, n, c);
            }
            MetricRow row;
            row.model = model_label;
            row.variable = forecast.registry[c].name;
            row.depth = depth_label(forecast.registry[c]);
            row.lead_time_days = lead;
            row.rmse = ensemble_mean_rmse(members, tru, w);
            row.crps = crps_unbiased(members, tru, w);
            if (forecast.n_members >= 2) {
                const SsrResult s =
                    spread_skill_ratio(members, tru, w, cfg.finite_ensemble_correction);
                row.ssr = s.ssr;
                row.spread = s.spread;
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::vector<MetricRow> evaluate_persistence(const domain::StateSequence& truth,
                                            int init_t, int n_lead,
                                            const std::vector<double>& area_weight,
                                            const MetricsConfig& cfg,
                                            const std::string& model_label) {
    if (init_t + n_lead >= truth.n_time) {
        throw std::invalid_argument("truth sequence too short for persistence leads");
    }
    const std::vector<double>* w = cfg.area_weighting ? &area_weight : nullptr;
    std::vector<MetricRow> rows;
    for (int c = 0; c < truth.n_chan(); ++c) {
        for (int lead = 1; lead <= n_lead; ++lead) {
            std::vector<std::vector<double>> members(1,
                                                     std::vector<double>(truth.n_grid));
            std::vector<double> tru(truth.n_grid);
            for (int n = 0; n < truth.n_grid; ++n) {
                members[0][n] = truth.at(init_t, n, c);
                tru[n] = truth.at(init_t + lead, n, c);
            }
            MetricRow row;
            row.model = model_label;
            row.variable = truth.registry[c].name;
            row.depth = depth_label(truth.registry[c]);
            row.lead_time_days = lead;
            row.rmse = ensemble_mean_rmse(members, tru, w);
            row.crps = crps_unbiased(members, tru, w);  // MAE for one member
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

void emit_scorecard(const std::vector<MetricRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open scorecard " + path);
    out << "model,variable,depth,lead_time_days,rmse,crps,ssr,spread\n";
    out.precision(17);
    for (const MetricRow& r : rows) {
        out << r.model << "," << r.variable << "," << r.depth << "," << r.lead_time_days
            << "," << r.rmse << "," << r.crps << "," << r.ssr << "," << r.spread << "\n";
    }
    if (!out) throw std::runtime_error("write failure on scorecard " + path);
}

std::vector<MetricRow> load_scorecard(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scorecard " + path);
    std::string line;
    if (!std::getline(in, line) ||
        line != "model,variable,depth,lead_time_days,rmse,crps,ssr,spread") {
        throw std::runtime_error("bad scorecard header in " + path);
    }
    std::vector<MetricRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        MetricRow r;
        std::string field;
        std::getline(ss, r.model, ',');
        std::getline(ss, r.variable, ',');
        std::getline(ss, r.depth, ',');
        std::getline(ss, field, ',');
        r.lead_time_days = std::stoi(field);
        std::getline(ss, field, ',');
        r.rmse = std::stod(field);
        std::getline(ss, field, ',');
        r.crps = std::stod(field);
        std::getline(ss, field, ',');
        r.ssr = std::stod(field);
        std::getline(ss, field, ',');
        r.spread = std::stod(field);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace njord::verify
