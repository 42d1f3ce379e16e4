#include "harmonize/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "harmonize/errors.hpp"
#include "harmonize/rng.hpp"

namespace harmonize {

void GbtParams::validate() const {
    if (n_rounds < 1) throw ValidationError("n_rounds must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0))
        throw ValidationError("learning_rate must lie in (0, 1]");
    if (max_depth < 1) throw ValidationError("max_depth must be >= 1");
    if (min_child_weight < 0.0) throw ValidationError("min_child_weight must be >= 0");
    if (l2_lambda < 0.0) throw ValidationError("l2_lambda must be >= 0");
    if (!(subsample > 0.0 && subsample <= 1.0))
        throw ValidationError("subsample must lie in (0, 1]");
}

double RegressionTree::predict_row(const double* x) const {
    int node = 0;
    while (nodes[node].feature >= 0)
        node = x[nodes[node].feature] < nodes[node].threshold ? nodes[node].left
                                                              : nodes[node].right;
    return nodes[node].value;
}

namespace {

// Depth-wise exact-greedy tree builder. Feature columns are sorted once per
// training matrix; each tree works on per-feature (row, value) arrays that
// are re-partitioned into ping-pong buffers as nodes split, so every level
// costs one sequential scan per feature. Split gains are compared through
// cross-multiplication to keep divisions out of the scan.
class TreeBuilder {
public:
    explicit TreeBuilder(const Eigen::MatrixXd& x)
        : n_(static_cast<int>(x.rows())), v_(static_cast<int>(x.cols())) {
        sorted_idx_.resize(static_cast<size_t>(n_) * v_);
        sorted_val_.resize(static_cast<size_t>(n_) * v_);
        std::vector<std::pair<double, uint32_t>> order(n_);
        for (int f = 0; f < v_; ++f) {
            for (int r = 0; r < n_; ++r) order[r] = {x(r, f), static_cast<uint32_t>(r)};
            std::sort(order.begin(), order.end());
            uint32_t* idx = sorted_idx_.data() + static_cast<size_t>(f) * n_;
            double* val = sorted_val_.data() + static_cast<size_t>(f) * n_;
            for (int r = 0; r < n_; ++r) {
                val[r] = order[r].first;
                idx[r] = order[r].second;
            }
        }
        idx_a_.resize(sorted_idx_.size());
        val_a_.resize(sorted_val_.size());
        idx_b_.resize(sorted_idx_.size());
        val_b_.resize(sorted_val_.size());
        node_of_.resize(n_);
    }

    int rows() const { return n_; }

    // Builds one tree. leaf_of[r] receives the flat node index of r's leaf
    // (-1 for rows excluded by the mask).
    RegressionTree build(const float* g, const float* h, const GbtParams& p,
                         const std::vector<uint8_t>* mask, std::vector<int>& leaf_of) {
        RegressionTree tree;
        leaf_of.assign(n_, -1);

        uint32_t* cur_idx = idx_a_.data();
        double* cur_val = val_a_.data();
        uint32_t* alt_idx = idx_b_.data();
        double* alt_val = val_b_.data();

        int m = n_;
        if (mask) {
            m = 0;
            for (int f = 0; f < v_; ++f) {
                const uint32_t* src_i = sorted_idx_.data() + static_cast<size_t>(f) * n_;
                const double* src_v = sorted_val_.data() + static_cast<size_t>(f) * n_;
                uint32_t* dst_i = cur_idx + static_cast<size_t>(f) * n_;
                double* dst_v = cur_val + static_cast<size_t>(f) * n_;
                int w = 0;
                for (int r = 0; r < n_; ++r) {
                    if (!(*mask)[src_i[r]]) continue;
                    dst_i[w] = src_i[r];
                    dst_v[w] = src_v[r];
                    ++w;
                }
                m = w;
            }
        } else {
            std::memcpy(cur_idx, sorted_idx_.data(), sorted_idx_.size() * sizeof(uint32_t));
            std::memcpy(cur_val, sorted_val_.data(), sorted_val_.size() * sizeof(double));
        }
        if (m == 0) {
            tree.nodes.push_back(TreeNode{});
            return tree;
        }

        double g_root = 0.0, h_root = 0.0;
        for (int r = 0; r < m; ++r) {
            g_root += g[cur_idx[r]];
            h_root += h[cur_idx[r]];
        }

        struct Active {
            int begin, end;
            double g_sum, h_sum;
            int tree_node;
            // best split candidate
            double best_num = -1.0, best_den = 1.0;
            double best_gl = 0.0, best_hl = 0.0, best_thr = 0.0;
            int best_feature = -1, best_pos = -1;
        };

        std::vector<Active> level;
        tree.nodes.push_back(TreeNode{});
        level.push_back({0, m, g_root, h_root, 0});

        const double lambda = p.l2_lambda;
        const double mcw = p.min_child_weight;
        const double lr = p.learning_rate;

        auto leaf_weight = [&](double gs, double hs) { return -lr * gs / (hs + lambda); };
        auto assign_rows = [&](const uint32_t* idx, int begin, int end, int tree_node) {
            for (int pos = begin; pos < end; ++pos) leaf_of[idx[pos]] = tree_node;
        };

        for (int depth = 0; depth < p.max_depth && !level.empty(); ++depth) {
            // Scan: best split per active node across all features.
            for (int f = 0; f < v_; ++f) {
                const uint32_t* const idx = cur_idx + static_cast<size_t>(f) * n_;
                const double* const val = cur_val + static_cast<size_t>(f) * n_;
                for (auto& a : level) {
                    const double gt = a.g_sum, ht = a.h_sum;
                    if (ht < 2.0 * mcw || a.end - a.begin < 2) continue;
                    const double h_stop = ht - mcw;
                    double gl = 0.0, hl = 0.0;
                    double best_num = a.best_num, best_den = a.best_den;
                    double best_gl = 0.0, best_hl = 0.0, best_thr = 0.0;
                    int best_pos = -1;
                    const int last = a.end - 1;

                    auto consider = [&](int pos, double glp, double hlp) {
                        if (hlp < mcw || hlp > h_stop) return;
                        if (val[pos] >= val[pos + 1]) return;
                        const double gr = gt - glp;
                        const double dl = hlp + lambda, dr = ht - hlp + lambda;
                        const double num = glp * glp * dr + gr * gr * dl;
                        const double den = dl * dr;
                        if (num * best_den > best_num * den) {
                            best_num = num;
                            best_den = den;
                            best_gl = glp;
                            best_hl = hlp;
                            best_thr = 0.5 * (val[pos] + val[pos + 1]);
                            best_pos = pos;
                        }
                    };

                    // The running sums advance once per element pair so the
                    // floating-point dependency chain is half as long.
                    int pos = a.begin;
                    for (; pos + 1 < last; pos += 2) {
                        const double g0 = g[idx[pos]], h0 = h[idx[pos]];
                        const double g1 = g[idx[pos + 1]], h1 = h[idx[pos + 1]];
                        const double gl0 = gl + g0, hl0 = hl + h0;
                        const double gl1 = gl + (g0 + g1), hl1 = hl + (h0 + h1);
                        consider(pos, gl0, hl0);
                        consider(pos + 1, gl1, hl1);
                        gl = gl1;
                        hl = hl1;
                        if (hl > h_stop) break;  // no later position can satisfy both children
                    }
                    if (pos < last && hl <= h_stop) {
                        gl += g[idx[pos]];
                        hl += h[idx[pos]];
                        consider(pos, gl, hl);
                    }
                    if (best_pos >= 0) {
                        a.best_num = best_num;
                        a.best_den = best_den;
                        a.best_gl = best_gl;
                        a.best_hl = best_hl;
                        a.best_thr = best_thr;
                        a.best_feature = f;
                        a.best_pos = best_pos;
                    }
                }
            }

            const bool final_level = depth + 1 == p.max_depth;
            std::vector<Active> next;
            std::vector<int> split_of(level.size(), -1);
            for (size_t ai = 0; ai < level.size(); ++ai) {
                Active& a = level[ai];
                // No minimum-gain pruning: any admissible candidate splits.
                const bool split = a.best_feature >= 0;
                const uint32_t* idx0 = cur_idx;  // feature 0 holds the same row set
                if (!split) {
                    tree.nodes[a.tree_node].value = leaf_weight(a.g_sum, a.h_sum);
                    assign_rows(idx0, a.begin, a.end, a.tree_node);
                    continue;
                }
                TreeNode& parent = tree.nodes[a.tree_node];
                parent.feature = a.best_feature;
                parent.threshold = a.best_thr;
                parent.left = static_cast<int>(tree.nodes.size());
                parent.right = parent.left + 1;
                tree.nodes.push_back(TreeNode{});
                tree.nodes.push_back(TreeNode{});

                const double gl = a.best_gl, hl = a.best_hl;
                const double gr = a.g_sum - gl, hr = a.h_sum - hl;
                const uint32_t* idx = cur_idx + static_cast<size_t>(a.best_feature) * n_;

                if (final_level) {
                    // Children are leaves; assign rows straight from the
                    // split feature's ordering, no partition needed.
                    tree.nodes[parent.left].value = leaf_weight(gl, hl);
                    tree.nodes[parent.right].value = leaf_weight(gr, hr);
                    assign_rows(idx, a.begin, a.best_pos + 1, parent.left);
                    assign_rows(idx, a.best_pos + 1, a.end, parent.right);
                    continue;
                }

                Active left{}, right{};
                left.tree_node = parent.left;
                right.tree_node = parent.right;
                left.g_sum = gl;
                left.h_sum = hl;
                right.g_sum = gr;
                right.h_sum = hr;
                const int left_id = static_cast<int>(next.size());
                split_of[ai] = left_id;
                for (int pos = a.begin; pos < a.end; ++pos)
                    node_of_[idx[pos]] = pos <= a.best_pos ? left_id : left_id + 1;
                left.begin = a.begin;
                left.end = a.begin + (a.best_pos - a.begin + 1);
                right.begin = left.end;
                right.end = a.end;
                next.push_back(left);
                next.push_back(right);
            }

            // Partition split segments into the alternate buffers; children
            // reuse the parent's span, finalized rows are dropped.
            if (!next.empty()) {
                for (int f = 0; f < v_; ++f) {
                    const uint32_t* idx = cur_idx + static_cast<size_t>(f) * n_;
                    const double* val = cur_val + static_cast<size_t>(f) * n_;
                    uint32_t* out_idx = alt_idx + static_cast<size_t>(f) * n_;
                    double* out_val = alt_val + static_cast<size_t>(f) * n_;
                    for (size_t ai = 0; ai < level.size(); ++ai) {
                        if (split_of[ai] < 0) continue;
                        const Active& a = level[ai];
                        const int span = a.end - a.begin;
                        if (f == a.best_feature) {
                            std::memcpy(out_idx + a.begin, idx + a.begin, span * sizeof(uint32_t));
                            std::memcpy(out_val + a.begin, val + a.begin, span * sizeof(double));
                            continue;
                        }
                        const int left_id = split_of[ai];
                        int lw = a.begin;
                        int rw = next[left_id].end;
                        for (int pos = a.begin; pos < a.end; ++pos) {
                            const uint32_t r = idx[pos];
                            const int slot = node_of_[r] == left_id ? lw++ : rw++;
                            out_idx[slot] = r;
                            out_val[slot] = val[pos];
                        }
                    }
                }
                std::swap(cur_idx, alt_idx);
                std::swap(cur_val, alt_val);
            }
            level = std::move(next);
        }
        return tree;
    }

private:
    int n_, v_;
    std::vector<uint32_t> sorted_idx_;
    std::vector<double> sorted_val_;
    std::vector<uint32_t> idx_a_, idx_b_;
    std::vector<double> val_a_, val_b_;
    std::vector<int> node_of_;
};

void check_features(const Eigen::MatrixXd& x) {
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (!std::isfinite(x.data()[i])) throw ValidationError("non-finite feature value");
}

std::vector<uint8_t> sample_mask(int n, double subsample, uint64_t seed) {
    std::vector<uint8_t> mask(n, 1);
    if (subsample >= 1.0) return mask;
    Rng rng(seed);
    for (int r = 0; r < n; ++r) mask[r] = rng.next_double() < subsample ? 1 : 0;
    return mask;
}

}  // namespace

GbtModel train_classifier(const Eigen::MatrixXd& x, const std::vector<int>& y, int n_classes,
                          const GbtParams& params) {
    params.validate();
    check_features(x);
    const int n = static_cast<int>(x.rows());
    if (static_cast<int>(y.size()) != n) throw ValidationError("label count differs from row count");
    if (n_classes < 2) throw ValidationError("classification needs at least 2 classes");
    std::vector<int> counts(n_classes, 0);
    for (int label : y) {
        if (label < 0 || label >= n_classes) throw ValidationError("label code outside class range");
        ++counts[label];
    }
    for (int c = 0; c < n_classes; ++c)
        if (counts[c] == 0)
            throw ValidationError("class " + std::to_string(c) + " has no training samples");

    GbtModel model;
    model.task = GbtModel::Task::multiclass;
    model.n_classes = n_classes;
    model.n_features = static_cast<int>(x.cols());
    model.base_score = 0.0;
    model.trees.reserve(static_cast<size_t>(params.n_rounds) * n_classes);

    TreeBuilder builder(x);
    Eigen::MatrixXd margins = Eigen::MatrixXd::Zero(n, n_classes);
    Eigen::MatrixXd probs(n, n_classes);
    std::vector<float> g(n), h(n);
    std::vector<int> leaf_of(n);
    const bool use_mask = params.subsample < 1.0;

    for (int round = 0; round < params.n_rounds; ++round) {
        for (int r = 0; r < n; ++r) {
            const double mx = margins.row(r).maxCoeff();
            double sum = 0.0;
            for (int c = 0; c < n_classes; ++c) {
                const double e = std::exp(margins(r, c) - mx);
                probs(r, c) = e;
                sum += e;
            }
            probs.row(r) /= sum;
        }
        for (int c = 0; c < n_classes; ++c) {
            for (int r = 0; r < n; ++r) {
                const double p = probs(r, c);
                g[r] = static_cast<float>(p - (y[r] == c ? 1.0 : 0.0));
                h[r] = static_cast<float>(std::max(2.0 * p * (1.0 - p), 1e-16));
            }
            std::vector<uint8_t> mask;
            if (use_mask)
                mask = sample_mask(n, params.subsample,
                                   derive_seed(params.seed, static_cast<uint64_t>(round) * n_classes + c));
            RegressionTree tree =
                builder.build(g.data(), h.data(), params, use_mask ? &mask : nullptr, leaf_of);
            for (int r = 0; r < n; ++r) {
                if (leaf_of[r] >= 0)
                    margins(r, c) += tree.nodes[leaf_of[r]].value;
                else
                    margins(r, c) += tree.predict_row(x.row(r).data());  // masked rows
            }
            model.trees.push_back(std::move(tree));
        }
    }
    return model;
}

GbtModel train_regressor(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         const GbtParams& params) {
    params.validate();
    check_features(x);
    const int n = static_cast<int>(x.rows());
    if (y.size() != n) throw ValidationError("target count differs from row count");
    if (n < 2) throw ValidationError("regression needs at least 2 rows");
    for (int r = 0; r < n; ++r)
        if (!std::isfinite(y[r])) throw ValidationError("non-finite regression target");

    GbtModel model;
    model.task = GbtModel::Task::regression;
    model.n_features = static_cast<int>(x.cols());
    model.base_score = y.mean();
    model.trees.reserve(params.n_rounds);

    TreeBuilder builder(x);
    Eigen::VectorXd margin = Eigen::VectorXd::Constant(n, model.base_score);
    std::vector<float> g(n), h(n, 1.0f);
    std::vector<int> leaf_of(n);
    const bool use_mask = params.subsample < 1.0;

    for (int round = 0; round < params.n_rounds; ++round) {
        for (int r = 0; r < n; ++r) g[r] = static_cast<float>(margin[r] - y[r]);
        std::vector<uint8_t> mask;
        if (use_mask)
            mask = sample_mask(n, params.subsample, derive_seed(params.seed, round));
        RegressionTree tree =
            builder.build(g.data(), h.data(), params, use_mask ? &mask : nullptr, leaf_of);
        for (int r = 0; r < n; ++r) {
            if (leaf_of[r] >= 0)
                margin[r] += tree.nodes[leaf_of[r]].value;
            else
                margin[r] += tree.predict_row(x.row(r).data());
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

Eigen::MatrixXd GbtModel::decision_margins(const Eigen::MatrixXd& x) const {
    if (static_cast<int>(x.cols()) != n_features)
        throw ValidationError("feature count differs from the trained model");
    const int n = static_cast<int>(x.rows());
    const int width = task == Task::multiclass ? n_classes : 1;
    Eigen::MatrixXd margins = Eigen::MatrixXd::Constant(n, width, base_score);
    // Row-major copy so predict_row sees contiguous features.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> xr = x;
    for (size_t t = 0; t < trees.size(); ++t) {
        const int c = task == Task::multiclass ? static_cast<int>(t % n_classes) : 0;
        for (int r = 0; r < n; ++r) margins(r, c) += trees[t].predict_row(xr.row(r).data());
    }
    return margins;
}

std::vector<int> GbtModel::predict_class(const Eigen::MatrixXd& x) const {
    if (task != Task::multiclass) throw ValidationError("model is not a classifier");
    if (x.rows() == 0) return {};
    const Eigen::MatrixXd margins = decision_margins(x);
    std::vector<int> out(x.rows());
    for (int r = 0; r < margins.rows(); ++r) {
        int best = 0;
        for (int c = 1; c < n_classes; ++c)
            if (margins(r, c) > margins(r, best)) best = c;  // ties keep the lower index
        out[r] = best;
    }
    return out;
}

std::vector<double> GbtModel::predict_value(const Eigen::MatrixXd& x) const {
    if (task != Task::regression) throw ValidationError("model is not a regressor");
    if (x.rows() == 0) return {};
    const Eigen::MatrixXd margins = decision_margins(x);
    return std::vector<double>(margins.col(0).data(), margins.col(0).data() + margins.rows());
}

}  // namespace harmonize
