#include "eyelab/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "eyelab/error.hpp"
#include "eyelab/stats.hpp"

namespace eyelab {

FeatureSchema fit_schema(std::span<const FeatureRow> rows, std::span<const FeatureSpec> specs) {
    for (const auto& row : rows) {
        if (row.size() != specs.size()) throw DataError("fit_schema: row width does not match feature specs");
    }
    FeatureSchema schema;
    for (std::size_t f = 0; f < specs.size(); ++f) {
        FittedFeature fitted;
        fitted.spec = specs[f];
        if (specs[f].kind == FeatureKind::Scalar) {
            std::vector<double> values;
            for (const auto& row : rows) {
                if (row[f].tag == FeatureValue::Tag::Number) values.push_back(row[f].number);
            }
            if (values.empty())
                throw DataError("fit_schema: scalar feature '" + specs[f].name + "' has no observed values");
            fitted.mean = mean(values);
            const double var = population_variance(values);
            if (var <= 0.0)
                throw DataError("fit_schema: scalar feature '" + specs[f].name + "' is constant in training data");
            fitted.std = std::sqrt(var);
            schema.column_names.push_back(specs[f].name);
        } else {
            std::set<std::string> seen;
            for (const auto& row : rows) {
                if (row[f].tag == FeatureValue::Tag::Category) seen.insert(row[f].category);
            }
            seen.erase(specs[f].reference_level);
            fitted.levels.assign(seen.begin(), seen.end());
            for (const auto& level : fitted.levels)
                schema.column_names.push_back(specs[f].name + "=" + level);
        }
        schema.features.push_back(std::move(fitted));
    }
    return schema;
}

Eigen::MatrixXd encode(std::span<const FeatureRow> rows, const FeatureSchema& schema,
                       std::vector<std::string>* warnings) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, schema.n_columns());
    std::set<std::string> warned;
    for (Eigen::Index r = 0; r < n; ++r) {
        const FeatureRow& row = rows[static_cast<std::size_t>(r)];
        if (row.size() != schema.features.size()) throw DataError("encode: row width does not match schema");
        Eigen::Index col = 0;
        for (std::size_t f = 0; f < schema.features.size(); ++f) {
            const FittedFeature& feat = schema.features[f];
            if (feat.spec.kind == FeatureKind::Scalar) {
                // Missing scalars impute to the training mean, i.e. 0 here.
                double z = 0.0;
                if (row[f].tag == FeatureValue::Tag::Number) z = (row[f].number - feat.mean) / feat.std;
                X(r, col) = z;
                ++col;
            } else {
                if (row[f].tag == FeatureValue::Tag::Category) {
                    const std::string& cat = row[f].category;
                    bool found = cat == feat.spec.reference_level;
                    for (std::size_t l = 0; l < feat.levels.size(); ++l) {
                        if (feat.levels[l] == cat) {
                            X(r, col + static_cast<Eigen::Index>(l)) = 1.0;
                            found = true;
                            break;
                        }
                    }
                    if (!found && warnings) {
                        const std::string key = feat.spec.name + "=" + cat;
                        if (warned.insert(key).second)
                            warnings->push_back("encode: unseen level '" + cat + "' for feature '" + feat.spec.name +
                                                "' mapped to the reference (zero) block");
                    }
                }
                col += static_cast<Eigen::Index>(feat.levels.size());
            }
        }
    }
    return X;
}

std::vector<FeatureSpec> select_baseline_features(std::span<const FeatureRow> rows,
                                                  std::span<const FeatureSpec> candidates, double threshold) {
    if (candidates.empty()) throw DataError("select_baseline_features: no candidate features");
    for (const auto& row : rows) {
        if (row.size() != candidates.size())
            throw DataError("select_baseline_features: row width does not match candidates");
    }
    std::vector<FeatureSpec> kept;
    for (std::size_t f = 0; f < candidates.size(); ++f) {
        std::size_t present = 0;
        for (const auto& row : rows) present += row[f].is_missing() ? 0 : 1;
        const double availability = rows.empty() ? 0.0 : static_cast<double>(present) / rows.size();
        if (availability >= threshold) kept.push_back(candidates[f]);
    }
    if (kept.empty()) throw DataError("no usable baseline features: all candidates below availability threshold");
    return kept;
}

namespace {

struct FitProblem {
    const Eigen::MatrixXd& X;
    Eigen::VectorXd t;       // labels as 0/1
    Eigen::VectorXd weight;  // per-sample loss weight (C * s_i)
    double l2 = 1.0;         // multiplier on 0.5 |w|^2
};

double objective_at(const FitProblem& prob, const Eigen::VectorXd& w, double b) {
    const Eigen::VectorXd f = prob.X * w + Eigen::VectorXd::Constant(prob.X.rows(), b);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        // log(1 + exp(-yhat f)) with yhat = +1 for t=1, -1 for t=0.
        const double margin = prob.t(i) > 0.5 ? f(i) : -f(i);
        loss += prob.weight(i) * log1pexp(-margin);
    }
    return 0.5 * prob.l2 * w.squaredNorm() + loss;
}

Eigen::VectorXd gradient_at(const FitProblem& prob, const Eigen::VectorXd& w, double b) {
    const Eigen::Index d = prob.X.cols();
    const Eigen::VectorXd f = prob.X * w + Eigen::VectorXd::Constant(prob.X.rows(), b);
    Eigen::VectorXd r(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) r(i) = prob.weight(i) * (logistic_sigmoid(f(i)) - prob.t(i));
    Eigen::VectorXd g(d + 1);
    g.head(d) = prob.X.transpose() * r + prob.l2 * w;
    g(d) = r.sum();
    return g;
}

LogisticModel newton_fit(const FitProblem& prob, double tol, int max_iter, std::vector<std::string>* warnings) {
    const Eigen::Index n = prob.X.rows();
    const Eigen::Index d = prob.X.cols();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double b = 0.0;
    double obj = objective_at(prob, w, b);

    LogisticModel model;
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        const Eigen::VectorXd g = gradient_at(prob, w, b);
        if (g.lpNorm<Eigen::Infinity>() <= tol) {
            model.converged = true;
            break;
        }

        const Eigen::VectorXd f = prob.X * w + Eigen::VectorXd::Constant(n, b);
        Eigen::VectorXd curv(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double p = logistic_sigmoid(f(i));
            curv(i) = prob.weight(i) * p * (1.0 - p);
        }
        Eigen::MatrixXd H(d + 1, d + 1);
        H.topLeftCorner(d, d) = prob.X.transpose() * curv.asDiagonal() * prob.X;
        H.topLeftCorner(d, d).diagonal().array() += prob.l2;
        const Eigen::VectorXd xc = prob.X.transpose() * curv;
        H.topRightCorner(d, 1) = xc;
        H.bottomLeftCorner(1, d) = xc.transpose();
        H(d, d) = curv.sum();

        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        Eigen::VectorXd step;
        if (ldlt.info() == Eigen::Success) {
            step = ldlt.solve(-g);
        }
        if (ldlt.info() != Eigen::Success || !step.allFinite() || g.dot(step) >= 0.0) {
            // Saturated or rank-deficient curvature: retry with a small
            // diagonal boost before falling back to steepest descent.
            Eigen::MatrixXd Hboost = H;
            const double boost = std::max(1e-10, 1e-10 * H.diagonal().maxCoeff());
            Hboost.diagonal().array() += boost;
            Eigen::LDLT<Eigen::MatrixXd> retry(Hboost);
            step = retry.solve(-g);
            if (retry.info() != Eigen::Success || !step.allFinite() || g.dot(step) >= 0.0) step = -g;
        }

        double alpha = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving) {
            const Eigen::VectorXd w_new = w + alpha * step.head(d);
            const double b_new = b + alpha * step(d);
            const double obj_new = objective_at(prob, w_new, b_new);
            if (obj_new < obj) {
                w = w_new;
                b = b_new;
                obj = obj_new;
                accepted = true;
                break;
            }
            alpha /= 2.0;
        }
        if (!accepted) {
            // Near the optimum the Newton decrement sinks below the
            // objective's summation roundoff, so the comparison above goes
            // blind; the full step still contracts the gradient
            // quadratically, which is what the tolerance measures.
            const Eigen::VectorXd w_try = w + step.head(d);
            const double b_try = b + step(d);
            const Eigen::VectorXd g_try = gradient_at(prob, w_try, b_try);
            if (!g_try.allFinite() || g_try.lpNorm<Eigen::Infinity>() >= g.lpNorm<Eigen::Infinity>()) break;
            w = w_try;
            b = b_try;
            obj = objective_at(prob, w_try, b_try);
        }
    }
    if (!model.converged) {
        const Eigen::VectorXd g = gradient_at(prob, w, b);
        model.converged = g.lpNorm<Eigen::Infinity>() <= tol;
        if (!model.converged && warnings)
            warnings->push_back("fit_logistic: did not reach gradient tolerance (max-norm " +
                                std::to_string(g.lpNorm<Eigen::Infinity>()) + " after " + std::to_string(iter) +
                                " iterations)");
    }
    model.weights = w;
    model.intercept = b;
    model.objective = obj;
    model.iterations = iter;
    return model;
}

FitProblem make_problem(const Eigen::MatrixXd& X, std::span<const int> y, double C, ClassWeight class_weight,
                        double l2) {
    if (static_cast<std::size_t>(X.rows()) != y.size())
        throw DataError("fit_logistic: label count does not match design matrix rows");
    if (!X.allFinite()) throw DataError("fit_logistic: design matrix contains non-finite values");
    Eigen::Index n_pos = 0;
    for (int label : y) {
        if (label != 0 && label != 1) throw DataError("fit_logistic: labels must be 0 or 1");
        n_pos += label;
    }
    const Eigen::Index n = X.rows();
    if (n_pos == 0 || n_pos == n) throw DataError("fit_logistic: both classes must be present");

    FitProblem prob{X, Eigen::VectorXd(n), Eigen::VectorXd(n), l2};
    const double w_pos =
        class_weight == ClassWeight::Balanced ? static_cast<double>(n) / (2.0 * static_cast<double>(n_pos)) : 1.0;
    const double w_neg = class_weight == ClassWeight::Balanced
                             ? static_cast<double>(n) / (2.0 * static_cast<double>(n - n_pos))
                             : 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        prob.t(i) = y[static_cast<std::size_t>(i)];
        prob.weight(i) = C * (y[static_cast<std::size_t>(i)] ? w_pos : w_neg);
    }
    return prob;
}

}  // namespace

double logistic_objective(const Eigen::MatrixXd& X, std::span<const int> y, const Eigen::VectorXd& w, double b,
                          double C, ClassWeight class_weight) {
    return objective_at(make_problem(X, y, C, class_weight, 1.0), w, b);
}

Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, std::span<const int> y, const Eigen::VectorXd& w, double b,
                                  double C, ClassWeight class_weight) {
    return gradient_at(make_problem(X, y, C, class_weight, 1.0), w, b);
}

LogisticModel fit_logistic(const Eigen::MatrixXd& X, std::span<const int> y, double C, ClassWeight class_weight,
                           double tol, int max_iter, std::vector<std::string>* warnings) {
    if (C <= 0.0) throw DataError("fit_logistic: C must be > 0");
    return newton_fit(make_problem(X, y, C, class_weight, 1.0), tol, max_iter, warnings);
}

LogisticModel fit_logistic_general(const Eigen::MatrixXd& X, std::span<const int> y,
                                   std::span<const double> sample_weights, double l2, double tol, int max_iter,
                                   std::vector<std::string>* warnings) {
    if (l2 < 0.0) throw DataError("fit_logistic_general: l2 must be >= 0");
    if (sample_weights.size() != y.size())
        throw DataError("fit_logistic_general: weight count does not match label count");
    FitProblem prob = make_problem(X, y, 1.0, ClassWeight::None, l2);
    for (Eigen::Index i = 0; i < prob.weight.size(); ++i) {
        const double w = sample_weights[static_cast<std::size_t>(i)];
        if (!(w > 0.0)) throw DataError("fit_logistic_general: sample weights must be > 0");
        prob.weight(i) = w;
    }
    return newton_fit(prob, tol, max_iter, warnings);
}

Eigen::VectorXd predict_proba(const LogisticModel& model, const Eigen::MatrixXd& X) {
    if (X.cols() != model.weights.size())
        throw DataError("predict_proba: column count does not match model (" + std::to_string(X.cols()) + " vs " +
                        std::to_string(model.weights.size()) + ")");
    const Eigen::VectorXd f = X * model.weights + Eigen::VectorXd::Constant(X.rows(), model.intercept);
    Eigen::VectorXd p(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) p(i) = logistic_sigmoid(f(i));
    return p;
}

namespace {

// Display order of race rows, mirroring the adjusted-analysis table; levels
// not listed here sort after, alphabetically.
int race_row_order(const std::string& level) {
    static const std::vector<std::string> order = {"Black", "Asian/Pacific Islander", "Hispanic", "Native American",
                                                   "Other", "Unknown"};
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (order[i] == level) return static_cast<int>(i);
    }
    return static_cast<int>(order.size());
}

}  // namespace

std::vector<AdjustedRow> adjusted_analysis(std::span<const int> outcome_labels, const AdjustedCovariates& covariates,
                                           std::span<const double> dls_scores, const std::string& reference_race,
                                           std::vector<std::string>* warnings) {
    const std::size_t n = outcome_labels.size();
    if (n == 0) throw DataError("adjusted_analysis: empty input");
    if (covariates.age_years.size() != n || covariates.race.size() != n || covariates.sex_male.size() != n ||
        covariates.years_with_diabetes.size() != n || dls_scores.size() != n)
        throw DataError("adjusted_analysis: covariate lengths do not match outcome length");

    // Pool race groups below 2% into Other; the reference level is exempt
    // so the model always has its baseline category.
    std::map<std::string, std::size_t> race_counts;
    for (const auto& r : covariates.race) ++race_counts[r];
    std::vector<std::string> pooled(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& r = covariates.race[i];
        const bool small = static_cast<double>(race_counts[r]) / static_cast<double>(n) < 0.02;
        pooled[i] = (small && r != reference_race) ? "Other" : r;
    }
    std::set<std::string> level_set(pooled.begin(), pooled.end());
    level_set.erase(reference_race);
    std::vector<std::string> levels(level_set.begin(), level_set.end());
    std::sort(levels.begin(), levels.end(), [](const std::string& a, const std::string& b) {
        const int oa = race_row_order(a), ob = race_row_order(b);
        if (oa != ob) return oa < ob;
        return a < b;
    });

    // Years with diabetes joins the model only when available for >= 85% of
    // units (the baseline feature rule); missing entries impute to the mean.
    std::size_t ydm_present = 0;
    double ydm_sum = 0.0;
    for (const auto& y : covariates.years_with_diabetes) {
        if (y) {
            ++ydm_present;
            ydm_sum += *y;
        }
    }
    const bool include_ydm = ydm_present > 0 && static_cast<double>(ydm_present) / static_cast<double>(n) >= 0.85;
    const double ydm_mean = ydm_present ? ydm_sum / static_cast<double>(ydm_present) : 0.0;
    if (!include_ydm && warnings)
        warnings->push_back("adjusted_analysis: years-with-diabetes column dropped (availability below 85%)");

    const double dls_mean = mean(dls_scores);
    const double dls_var = population_variance(dls_scores);
    if (dls_var <= 0.0) throw DataError("adjusted_analysis: DLS scores are constant; cannot z-score");
    const double dls_std = std::sqrt(dls_var);

    std::vector<std::string> names;
    names.push_back("Age");
    names.push_back("Sex=Male");
    for (const auto& level : levels) names.push_back("Race=" + level);
    if (include_ydm) names.push_back("YrsDM");
    names.push_back("DLS");

    const Eigen::Index d = static_cast<Eigen::Index>(names.size());
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), d);
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::Index col = 0;
        X(i, col++) = covariates.age_years[i];
        X(i, col++) = covariates.sex_male[i] ? 1.0 : 0.0;
        for (const auto& level : levels) X(i, col++) = pooled[i] == level ? 1.0 : 0.0;
        if (include_ydm) {
            const auto& y = covariates.years_with_diabetes[i];
            X(i, col++) = y ? *y : ydm_mean;
        }
        X(i, col++) = (dls_scores[i] - dls_mean) / dls_std;
    }

    // Collinear designs make the information matrix singular; identify and
    // name the offending columns up front.
    {
        Eigen::MatrixXd design(n, d + 1);
        design.leftCols(d) = X;
        design.col(d).setOnes();
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
        qr.setThreshold(1e-10);
        if (qr.rank() < d + 1) {
            const auto& perm = qr.colsPermutation().indices();
            std::string bad;
            for (Eigen::Index k = qr.rank(); k < d + 1; ++k) {
                const Eigen::Index col = perm(k);
                if (!bad.empty()) bad += ", ";
                bad += col == d ? std::string("intercept") : names[static_cast<std::size_t>(col)];
            }
            throw DataError("adjusted_analysis: singular information matrix; collinear columns: " + bad);
        }
    }

    std::vector<int> y(outcome_labels.begin(), outcome_labels.end());
    FitProblem prob = make_problem(X, y, 1.0, ClassWeight::None, /*l2=*/0.0);
    LogisticModel model = newton_fit(prob, 1e-8, 100, warnings);
    const double max_coef = std::max(model.weights.lpNorm<Eigen::Infinity>(), std::abs(model.intercept));
    if (!model.converged && max_coef > 15.0)
        throw DataError("adjusted_analysis: quasi-separation detected (unbounded coefficients)");

    // Observed information at the optimum; its inverse gives Wald SEs.
    const Eigen::VectorXd f =
        X * model.weights + Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), model.intercept);
    Eigen::VectorXd curv(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < curv.size(); ++i) {
        const double p = logistic_sigmoid(f(i));
        curv(i) = p * (1.0 - p);
    }
    Eigen::MatrixXd info(d + 1, d + 1);
    info.topLeftCorner(d, d) = X.transpose() * curv.asDiagonal() * X;
    const Eigen::VectorXd xc = X.transpose() * curv;
    info.topRightCorner(d, 1) = xc;
    info.bottomLeftCorner(1, d) = xc.transpose();
    info(d, d) = curv.sum();
    const Eigen::MatrixXd cov = info.inverse();

    const double zc = normal_critical(0.95);
    std::vector<AdjustedRow> rows;
    for (Eigen::Index j = 0; j < d; ++j) {
        const double beta = model.weights(j);
        const double se = std::sqrt(cov(j, j));
        AdjustedRow row;
        row.variable = names[static_cast<std::size_t>(j)];
        row.odds_ratio = std::exp(beta);
        row.ci_low = std::exp(beta - zc * se);
        row.ci_high = std::exp(beta + zc * se);
        row.p = 2.0 * normal_sf(std::abs(beta / se));
        rows.push_back(row);
    }
    return rows;
}

std::string baseline_to_json(const SavedBaseline& saved) {
    nlohmann::json doc;
    doc["train_slice"] = saved.train_slice;
    doc["seed"] = saved.seed;
    doc["C"] = saved.C;
    doc["tol"] = saved.tol;
    nlohmann::json feats = nlohmann::json::array();
    for (const auto& f : saved.schema.features) {
        nlohmann::json obj;
        obj["name"] = f.spec.name;
        obj["kind"] = f.spec.kind == FeatureKind::Scalar ? "scalar" : "categorical";
        obj["reference_level"] = f.spec.reference_level;
        obj["mean"] = f.mean;
        obj["std"] = f.std;
        obj["levels"] = f.levels;
        feats.push_back(std::move(obj));
    }
    doc["schema"] = {{"features", feats}, {"column_names", saved.schema.column_names}};
    nlohmann::json models = nlohmann::json::object();
    for (const auto& [target, model] : saved.per_target) {
        nlohmann::json obj;
        obj["weights"] = std::vector<double>(model.weights.data(), model.weights.data() + model.weights.size());
        obj["intercept"] = model.intercept;
        obj["objective"] = model.objective;
        obj["converged"] = model.converged;
        obj["iterations"] = model.iterations;
        models[target] = std::move(obj);
    }
    doc["models"] = std::move(models);
    return doc.dump(2) + "\n";
}

SavedBaseline baseline_from_json(const std::string& text, const std::string& context) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(context + ": invalid JSON: " + std::string(e.what()));
    }
    try {
        SavedBaseline saved;
        saved.train_slice = doc.value("train_slice", "");
        saved.seed = doc.value("seed", std::uint64_t{0});
        saved.C = doc.value("C", 1.0);
        saved.tol = doc.value("tol", 1e-8);
        for (const auto& obj : doc.at("schema").at("features")) {
            FittedFeature f;
            f.spec.name = obj.at("name").get<std::string>();
            f.spec.kind = obj.at("kind").get<std::string>() == "scalar" ? FeatureKind::Scalar : FeatureKind::Categorical;
            f.spec.reference_level = obj.value("reference_level", "");
            f.mean = obj.value("mean", 0.0);
            f.std = obj.value("std", 1.0);
            f.levels = obj.value("levels", std::vector<std::string>{});
            saved.schema.features.push_back(std::move(f));
        }
        saved.schema.column_names = doc.at("schema").at("column_names").get<std::vector<std::string>>();
        for (const auto& [target, obj] : doc.at("models").items()) {
            LogisticModel m;
            const auto weights = obj.at("weights").get<std::vector<double>>();
            m.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
            m.intercept = obj.at("intercept").get<double>();
            m.objective = obj.value("objective", 0.0);
            m.converged = obj.value("converged", true);
            m.iterations = obj.value("iterations", 0);
            saved.per_target[target] = std::move(m);
        }
        return saved;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(context + ": malformed baseline model file: " + std::string(e.what()));
    }
}

}  // namespace eyelab
