#include "otdg/dg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "otdg/measures.hpp"
#include "otdg/mi.hpp"
#include "otdg/ot.hpp"
#include "otdg/rng.hpp"

namespace otdg::dg {

Method method_from_string(const std::string& s) {
    if (s == "erm") return Method::erm;
    if (s == "wbae") return Method::wbae;
    if (s == "wbmi") return Method::wbmi;
    if (s == "wbae_no_wb") return Method::wbae_no_wb;
    if (s == "wbae_no_r") return Method::wbae_no_r;
    if (s == "wbmi_no_wb") return Method::wbmi_no_wb;
    throw std::runtime_error("unknown method '" + s + "'");
}

std::string method_to_string(Method m) {
    switch (m) {
        case Method::erm: return "erm";
        case Method::wbae: return "wbae";
        case Method::wbmi: return "wbmi";
        case Method::wbae_no_wb: return "wbae_no_wb";
        case Method::wbae_no_r: return "wbae_no_r";
        case Method::wbmi_no_wb: return "wbmi_no_wb";
    }
    return "?";
}

double TrainConfig::effective_alpha() const {
    if (method == Method::erm || method == Method::wbae_no_wb || method == Method::wbmi_no_wb) return 0.0;
    return alpha;
}

double TrainConfig::effective_beta() const {
    if (method == Method::erm || method == Method::wbae_no_r) return 0.0;
    return beta;
}

bool TrainConfig::uses_decoder() const { return method == Method::wbae || method == Method::wbae_no_wb; }

bool TrainConfig::uses_mi() const { return method == Method::wbmi || method == Method::wbmi_no_wb; }

namespace {

Tensor he_normal(int rows, int cols, std::mt19937_64& rng) {
    Tensor t(rows, cols);
    double sd = std::sqrt(2.0 / rows);
    for (auto& v : t.data) v = sd * std_normal(rng);
    return t;
}

}  // namespace

Model Model::init(int input_dim, int hidden, int feature_dim, int classes, bool decoder, uint64_t seed) {
    if (input_dim < 1 || hidden < 1 || feature_dim < 1 || classes < 2)
        throw std::runtime_error("Model::init: bad dimensions");
    Model m;
    m.input_dim = input_dim;
    m.hidden = hidden;
    m.feature_dim = feature_dim;
    m.classes = classes;
    m.has_decoder = decoder;
    auto rng = make_rng(seed);
    // encoder and classifier first, so their draws match across methods
    // that differ only in the decoder's presence
    m.params.push_back({"enc.w0", he_normal(input_dim, hidden, rng)});
    m.params.push_back({"enc.b0", Tensor(1, hidden)});
    m.params.push_back({"enc.w1", he_normal(hidden, feature_dim, rng)});
    m.params.push_back({"enc.b1", Tensor(1, feature_dim)});
    m.params.push_back({"clf.w", he_normal(feature_dim, classes, rng)});
    m.params.push_back({"clf.b", Tensor(1, classes)});
    if (decoder) {
        m.params.push_back({"dec.w0", he_normal(feature_dim, hidden, rng)});
        m.params.push_back({"dec.b0", Tensor(1, hidden)});
        m.params.push_back({"dec.w1", he_normal(hidden, input_dim, rng)});
        m.params.push_back({"dec.b1", Tensor(1, input_dim)});
    }
    return m;
}

diff::Bindings Model::bindings() const {
    diff::Bindings b;
    for (const auto& p : params) b[p.id] = p.value;
    return b;
}

Parameter& Model::find(const std::string& id) {
    for (auto& p : params)
        if (p.id == id) return p;
    throw std::runtime_error("Model: no parameter '" + id + "'");
}

const Parameter& Model::find(const std::string& id) const {
    for (const auto& p : params)
        if (p.id == id) return p;
    throw std::runtime_error("Model: no parameter '" + id + "'");
}

std::vector<std::string> Model::encoder_ids() const { return {"enc.w0", "enc.b0", "enc.w1", "enc.b1"}; }
std::vector<std::string> Model::decoder_ids() const { return {"dec.w0", "dec.b0", "dec.w1", "dec.b1"}; }
std::vector<std::string> Model::classifier_ids() const { return {"clf.w", "clf.b"}; }

ModelGraph::ModelGraph(diff::Graph& graph, const Model& m) : g(graph), model(m) {
    for (const auto& p : m.params) leaves[p.id] = g.leaf(p.id, p.value.rows, p.value.cols);
}

diff::NodeId ModelGraph::encoder(diff::NodeId x) {
    diff::NodeId h = g.relu(g.add(g.matmul(x, leaves.at("enc.w0")), leaves.at("enc.b0")));
    return g.add(g.matmul(h, leaves.at("enc.w1")), leaves.at("enc.b1"));
}

diff::NodeId ModelGraph::decoder(diff::NodeId z) {
    diff::NodeId h = g.relu(g.add(g.matmul(z, leaves.at("dec.w0")), leaves.at("dec.b0")));
    return g.add(g.matmul(h, leaves.at("dec.w1")), leaves.at("dec.b1"));
}

diff::NodeId ModelGraph::classifier(diff::NodeId z) {
    return g.add(g.matmul(z, leaves.at("clf.w")), leaves.at("clf.b"));
}

Tensor Model::encode(const Tensor& x) const {
    diff::Graph g;
    ModelGraph mg(g, *this);
    diff::NodeId out = mg.encoder(g.constant(x));
    return diff::evaluate(g, out, bindings());
}

Tensor Model::decode(const Tensor& z) const {
    if (!has_decoder) throw std::runtime_error("Model: no decoder present");
    diff::Graph g;
    ModelGraph mg(g, *this);
    diff::NodeId out = mg.decoder(g.constant(z));
    return diff::evaluate(g, out, bindings());
}

Tensor Model::logits(const Tensor& x) const {
    diff::Graph g;
    ModelGraph mg(g, *this);
    diff::NodeId out = mg.classifier(mg.encoder(g.constant(x)));
    return diff::evaluate(g, out, bindings());
}

diff::NodeId classification_loss_node(diff::Graph& g, const std::vector<diff::NodeId>& logit_nodes,
                                      const std::vector<const std::vector<int>*>& labels, int classes) {
    if (logit_nodes.empty() || logit_nodes.size() != labels.size())
        throw std::runtime_error("classification_loss: one label vector per logit node required");
    diff::NodeId total = -1;
    for (size_t s = 0; s < logit_nodes.size(); ++s) {
        auto [m, c] = g.shape(logit_nodes[s]);
        if (c != classes || static_cast<int>(labels[s]->size()) != m)
            throw std::runtime_error("classification_loss: shape mismatch");
        Tensor onehot(m, classes);
        for (int i = 0; i < m; ++i) {
            int y = (*labels[s])[static_cast<size_t>(i)];
            if (y < 0 || y >= classes)
                throw std::runtime_error("classification_loss: label " + std::to_string(y) + " out of range [0, " +
                                         std::to_string(classes) + ")");
            onehot.at(i, y) = 1.0;
        }
        diff::NodeId lse = g.sum_all(g.logsumexp_rows(logit_nodes[s]));
        diff::NodeId picked = g.sum_all(g.mul(logit_nodes[s], g.constant(onehot)));
        diff::NodeId per_domain = g.scale(g.sub(lse, picked), 1.0 / m);
        total = total < 0 ? per_domain : g.add(total, per_domain);
    }
    return total;
}

diff::NodeId reconstruction_loss_node(diff::Graph& g, const std::vector<diff::NodeId>& inputs,
                                      const std::vector<diff::NodeId>& reconstructions) {
    if (inputs.empty() || inputs.size() != reconstructions.size())
        throw std::runtime_error("reconstruction_loss: one reconstruction per input required");
    diff::NodeId total = -1;
    for (size_t s = 0; s < inputs.size(); ++s) {
        auto [m, d] = g.shape(inputs[s]);
        auto [mr, dr] = g.shape(reconstructions[s]);
        if (m != mr || d != dr) throw std::runtime_error("reconstruction_loss: shape mismatch");
        diff::NodeId diff_node = g.sub(inputs[s], reconstructions[s]);
        diff::NodeId per_domain = g.scale(g.sum_all(g.mul(diff_node, diff_node)), 1.0 / m);
        total = total < 0 ? per_domain : g.add(total, per_domain);
    }
    return total;
}

namespace {

void apply_gradients(Model& model, const diff::GradMap& grads, const std::vector<std::string>& ids,
                     const TrainConfig& cfg, OptimizerState& opt) {
    for (const auto& id : ids) {
        auto it = grads.find(id);
        if (it == grads.end()) continue;
        Parameter& p = model.find(id);
        const Tensor& g = it->second;
        if (cfg.optimizer == OptimizerKind::sgd) {
            for (size_t k = 0; k < p.value.data.size(); ++k) p.value.data[k] -= cfg.lr * g.data[k];
        } else {
            Tensor& m1 = opt.m1.try_emplace(id, Tensor(g.rows, g.cols)).first->second;
            Tensor& m2 = opt.m2.try_emplace(id, Tensor(g.rows, g.cols)).first->second;
            double b1 = 0.9, b2 = 0.999, eps = 1e-8;
            double c1 = 1.0 - std::pow(b1, static_cast<double>(opt.t));
            double c2 = 1.0 - std::pow(b2, static_cast<double>(opt.t));
            for (size_t k = 0; k < p.value.data.size(); ++k) {
                m1.data[k] = b1 * m1.data[k] + (1.0 - b1) * g.data[k];
                m2.data[k] = b2 * m2.data[k] + (1.0 - b2) * g.data[k] * g.data[k];
                p.value.data[k] -= cfg.lr * (m1.data[k] / c1) / (std::sqrt(m2.data[k] / c2) + eps);
            }
        }
    }
}

std::vector<double> uniform_weights(int n) { return std::vector<double>(static_cast<size_t>(n), 1.0 / n); }

}  // namespace

StepRecord train_step(Model& model, const std::vector<Batch>& batches, const TrainConfig& cfg, OptimizerState& opt,
                      uint64_t step_seed) {
    if (batches.empty()) throw std::runtime_error("train_step: no batches");
    double alpha = cfg.effective_alpha();
    double beta = cfg.effective_beta();

    diff::Graph g;
    ModelGraph mg(g, model);
    diff::Bindings binds = model.bindings();

    std::vector<diff::NodeId> xs, zs, logit_nodes;
    std::vector<const std::vector<int>*> labels;
    int min_batch = batches[0].features.rows;
    for (const auto& b : batches) {
        diff::NodeId x = g.constant(b.features);
        diff::NodeId z = mg.encoder(x);
        xs.push_back(x);
        zs.push_back(z);
        logit_nodes.push_back(mg.classifier(z));
        labels.push_back(&b.labels);
        min_batch = std::min(min_batch, b.features.rows);
    }
    diff::NodeId l_c = classification_loss_node(g, logit_nodes, labels, model.classes);

    // detached feature values feed the barycenter and the score estimator
    std::vector<Tensor> zvals;
    if (alpha > 0.0 || (cfg.uses_mi() && beta > 0.0)) {
        diff::Evaluation ev(g, binds);
        for (diff::NodeId z : zs) zvals.push_back(ev.value(z));
    }

    diff::NodeId l_wb = -1;
    if (alpha > 0.0) {
        std::vector<meas::EmpiricalMeasure> feats;
        std::vector<std::vector<double>> feat_weights;
        for (const auto& zv : zvals) {
            feats.push_back(meas::EmpiricalMeasure::uniform(zv));
            feat_weights.push_back(uniform_weights(zv.rows));
        }
        ot::BarycenterOptions bopt;
        bopt.outer_iters = cfg.bary_outer_iters;
        bopt.tol = cfg.bary_tol;
        bopt.seed = derive_seed(step_seed, "bary-init");
        ot::BarycenterResult bary = ot::free_support_barycenter(feats, uniform_weights(static_cast<int>(feats.size())),
                                                                min_batch, cfg.epsilon, bopt);
        l_wb = ot::barycenter_loss_node(g, zs, feat_weights, bary.measure,
                                        {cfg.epsilon, cfg.sinkhorn_unroll});
    }

    StepRecord rec;
    if (cfg.uses_mi()) {
        diff::NodeId l_i = -1;
        if (beta > 0.0)
            l_i = mi::mige_loss_node(g, zs, zvals, cfg.delta, {.num_eigen = cfg.mi_num_eigen},
                                     derive_seed(step_seed, "mige"));
        diff::NodeId enc_target = -1;
        if (cfg.encoder_update == EncoderUpdate::objective) enc_target = l_c;
        if (alpha > 0.0) {
            diff::NodeId term = g.scale(l_wb, alpha);
            enc_target = enc_target < 0 ? term : g.add(enc_target, term);
        }
        if (beta > 0.0) {
            diff::NodeId term = g.scale(l_i, beta);
            enc_target = enc_target < 0 ? term : g.add(enc_target, term);
        }
        diff::Evaluation ev(g, binds);
        rec.l_c = ev.value(l_c).item();
        if (l_wb >= 0) rec.l_wb = ev.value(l_wb).item();
        if (l_i >= 0) rec.l_aux = ev.value(l_i).item();
        opt.t += 1;
        diff::GradMap gc = ev.backward(l_c);
        apply_gradients(model, gc, model.classifier_ids(), cfg, opt);
        if (enc_target >= 0) {
            diff::GradMap ge = enc_target == l_c ? gc : ev.backward(enc_target);
            apply_gradients(model, ge, model.encoder_ids(), cfg, opt);
        }
        return rec;
    }

    // erm and the autoencoder family
    diff::NodeId l_r = -1;
    if (model.has_decoder) {
        std::vector<diff::NodeId> recon;
        for (diff::NodeId z : zs) recon.push_back(mg.decoder(z));
        l_r = reconstruction_loss_node(g, xs, recon);
    }
    diff::NodeId l_total = l_c;
    if (alpha > 0.0) l_total = g.add(l_total, g.scale(l_wb, alpha));
    if (beta > 0.0 && l_r >= 0) l_total = g.add(l_total, g.scale(l_r, beta));

    diff::Evaluation ev(g, binds);
    rec.l_c = ev.value(l_c).item();
    if (l_wb >= 0) rec.l_wb = ev.value(l_wb).item();
    if (l_r >= 0) rec.l_aux = ev.value(l_r).item();

    opt.t += 1;
    diff::GradMap gc = ev.backward(l_c);
    apply_gradients(model, gc, model.classifier_ids(), cfg, opt);
    if (l_r >= 0) {
        diff::GradMap gd = ev.backward(l_r);
        apply_gradients(model, gd, model.decoder_ids(), cfg, opt);
    }
    diff::GradMap ge = l_total == l_c ? gc : ev.backward(l_total);
    apply_gradients(model, ge, model.encoder_ids(), cfg, opt);
    return rec;
}

double accuracy(const Model& m, const data::Domain& d) {
    if (d.features.rows == 0) return 0.0;
    Tensor lg = m.logits(d.features);
    int correct = 0;
    for (int i = 0; i < lg.rows; ++i) {
        int best = 0;
        for (int c = 1; c < lg.cols; ++c)
            if (lg.at(i, c) > lg.at(i, best)) best = c;
        correct += best == d.labels[static_cast<size_t>(i)];
    }
    return static_cast<double>(correct) / lg.rows;
}

namespace {

// Mean pairwise debiased divergence between encoded domains; the alignment
// metric reported at initialization and after training.
double mean_encoded_divergence(const Model& m, const data::DomainDataset& ds, double eps) {
    if (ds.domains.size() < 2) return 0.0;
    std::vector<meas::EmpiricalMeasure> encoded;
    for (const auto& dom : ds.domains) {
        int n = dom.features.rows;
        int take = std::min(n, 256);
        Tensor sub(take, ds.feature_dim);
        for (int i = 0; i < take; ++i) {
            int src = static_cast<int>((static_cast<long long>(i) * n) / take);
            for (int k = 0; k < ds.feature_dim; ++k) sub.at(i, k) = dom.features.at(src, k);
        }
        encoded.push_back(meas::EmpiricalMeasure::uniform(m.encode(sub)));
    }
    double total = 0.0;
    int pairs = 0;
    for (size_t i = 0; i < encoded.size(); ++i)
        for (size_t j = i + 1; j < encoded.size(); ++j) {
            total += ot::sinkhorn_divergence(encoded[i], encoded[j], eps, {.max_iter = 300, .tol = 1e-4});
            ++pairs;
        }
    return total / pairs;
}

}  // namespace

RunReport train(const TrainConfig& cfg, const data::DomainDataset& seen, const data::Domain* unseen,
                Model* selected_model) {
    if (seen.domains.empty()) throw std::runtime_error("train: no seen domains");
    for (const auto& d : seen.domains)
        if (d.features.rows == 0) throw std::runtime_error("train: empty domain '" + d.name + "'");

    data::SplitResult split = data::split_train_val(seen, cfg.split_fraction, derive_seed(cfg.seed, "split"));
    Model model = Model::init(seen.feature_dim, cfg.hidden, cfg.feature_dim, seen.class_count, cfg.uses_decoder(),
                              derive_seed(cfg.seed, "init"));
    OptimizerState opt;

    RunReport report;
    report.method = cfg.method;
    report.seed = cfg.seed;
    report.initial_encoded_divergence = mean_encoded_divergence(model, split.train, cfg.epsilon);

    int min_train = split.train.domains[0].features.rows;
    for (const auto& d : split.train.domains) min_train = std::min(min_train, d.features.rows);
    int batch = std::min(cfg.batch, min_train);
    int steps_per_epoch = std::max(1, min_train / batch);

    double best_acc = -1.0;
    std::vector<Parameter> best_params = model.params;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // fresh without-replacement order per domain per epoch
        std::vector<std::vector<int>> order(split.train.domains.size());
        for (size_t s = 0; s < split.train.domains.size(); ++s) {
            int n = split.train.domains[s].features.rows;
            order[s].resize(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) order[s][static_cast<size_t>(i)] = i;
            auto rng = make_rng(derive_seed(cfg.seed, "epoch-" + std::to_string(epoch) + "-dom-" + std::to_string(s)));
            for (int i = n - 1; i > 0; --i) std::swap(order[s][static_cast<size_t>(i)],
                                                      order[s][static_cast<size_t>(uniform_int(rng, i + 1))]);
        }

        StepRecord epoch_mean;
        for (int step = 0; step < steps_per_epoch; ++step) {
            std::vector<Batch> batches;
            for (size_t s = 0; s < split.train.domains.size(); ++s) {
                const auto& dom = split.train.domains[s];
                Batch b;
                b.features = Tensor(batch, seen.feature_dim);
                b.labels.resize(static_cast<size_t>(batch));
                for (int i = 0; i < batch; ++i) {
                    int src = order[s][static_cast<size_t>(step * batch + i)];
                    for (int k = 0; k < seen.feature_dim; ++k) b.features.at(i, k) = dom.features.at(src, k);
                    b.labels[static_cast<size_t>(i)] = dom.labels[static_cast<size_t>(src)];
                }
                batches.push_back(std::move(b));
            }
            StepRecord rec = train_step(model, batches, cfg, opt,
                                        derive_seed(cfg.seed, "step-" + std::to_string(epoch) + "-" + std::to_string(step)));
            epoch_mean.l_c += rec.l_c / steps_per_epoch;
            epoch_mean.l_wb += rec.l_wb / steps_per_epoch;
            epoch_mean.l_aux += rec.l_aux / steps_per_epoch;
        }
        report.epoch_losses.push_back(epoch_mean);

        long correct = 0, total = 0;
        for (const auto& dom : split.val.domains) {
            correct += std::lround(accuracy(model, dom) * dom.features.rows);
            total += dom.features.rows;
        }
        double val_acc = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
        report.val_accuracy.push_back(val_acc);
        if (val_acc > best_acc) {
            best_acc = val_acc;
            report.selected_epoch = epoch;
            best_params = model.params;
        }
    }

    report.final_encoded_divergence = mean_encoded_divergence(model, split.train, cfg.epsilon);

    Model best = model;
    best.params = best_params;
    if (unseen) {
        report.test_accuracy = accuracy(best, *unseen);
        report.has_test = true;
    }
    if (selected_model) *selected_model = std::move(best);
    return report;
}

namespace {

LooCell cell_from(const std::vector<double>& values) {
    LooCell c;
    for (double v : values) c.mean += v;
    c.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - c.mean) * (v - c.mean);
        c.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return c;
}

}  // namespace

LooTable leave_one_out(const data::DomainDataset& ds, const TrainConfig& cfg, const std::vector<uint64_t>& seeds) {
    if (ds.domains.size() < 2) throw std::runtime_error("leave_one_out: need at least two domains");
    if (seeds.empty()) throw std::runtime_error("leave_one_out: need at least one seed");
    LooTable table;
    table.columns = {method_to_string(cfg.method)};
    std::vector<std::vector<double>> per_domain(ds.domains.size());
    for (size_t u = 0; u < ds.domains.size(); ++u) {
        data::DomainDataset rest;
        rest.class_count = ds.class_count;
        rest.feature_dim = ds.feature_dim;
        for (size_t s = 0; s < ds.domains.size(); ++s)
            if (s != u) rest.domains.push_back(ds.domains[s]);
        for (uint64_t seed : seeds) {
            TrainConfig run_cfg = cfg;
            run_cfg.seed = seed;
            RunReport rep = train(run_cfg, rest, &ds.domains[u]);
            per_domain[u].push_back(rep.test_accuracy);
        }
        table.rows.push_back(ds.domains[u].name);
        table.cells.push_back({cell_from(per_domain[u])});
    }
    // per-seed average over held-out domains
    std::vector<double> avg(seeds.size(), 0.0);
    for (size_t k = 0; k < seeds.size(); ++k) {
        for (size_t u = 0; u < ds.domains.size(); ++u) avg[k] += per_domain[u][k];
        avg[k] /= static_cast<double>(ds.domains.size());
    }
    table.rows.push_back("Avg");
    table.cells.push_back({cell_from(avg)});
    return table;
}

LooTable ablate(const data::DomainDataset& ds, const TrainConfig& base, const std::vector<uint64_t>& seeds) {
    // wbae_no_r doubles as the MI ablation; the two variants are one run
    const std::vector<Method> variants{Method::wbae_no_wb, Method::wbae_no_r, Method::wbmi_no_wb, Method::wbae,
                                       Method::wbmi};
    LooTable table;
    bool first = true;
    for (Method mth : variants) {
        TrainConfig cfg = base;
        cfg.method = mth;
        LooTable one = leave_one_out(ds, cfg, seeds);
        table.columns.push_back(one.columns[0]);
        if (first) {
            table.rows = one.rows;
            table.cells.assign(one.rows.size(), {});
            first = false;
        }
        for (size_t r = 0; r < one.rows.size(); ++r) table.cells[r].push_back(one.cells[r][0]);
    }
    return table;
}

}  // namespace otdg::dg
