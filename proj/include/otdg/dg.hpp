#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "otdg/autodiff.hpp"
#include "otdg/data.hpp"
#include "otdg/tensor.hpp"

namespace otdg::dg {

enum class Method { erm, wbae, wbmi, wbae_no_wb, wbae_no_r, wbmi_no_wb };
Method method_from_string(const std::string& s);
std::string method_to_string(Method m);

enum class EncoderUpdate { objective, algorithm1 };
enum class OptimizerKind { sgd, adam };

struct TrainConfig {
    Method method = Method::wbae;
    double alpha = 1e-4;
    double beta = 1e-4;
    double epsilon = 0.5;          // entropic regularization of the alignment loss
    double delta = 0.1;            // feature noise scale (MI methods)
    double lr = 5e-5;
    int batch = 32;
    int epochs = 40;
    uint64_t seed = 0;
    int feature_dim = 8;
    int hidden = 64;
    EncoderUpdate encoder_update = EncoderUpdate::objective;
    OptimizerKind optimizer = OptimizerKind::sgd;
    int sinkhorn_unroll = 30;      // unrolled iterations inside the loss graph
    int bary_outer_iters = 20;
    double bary_tol = 1e-4;
    int mi_num_eigen = 6;
    double split_fraction = 0.8;

    // effective loss weights after the method's own zeroing
    double effective_alpha() const;
    double effective_beta() const;
    bool uses_decoder() const;
    bool uses_mi() const;
};

struct Parameter {
    std::string id;
    Tensor value;
};

// Encoder d -> hidden -> d' (ReLU), optional mirrored decoder, one-linear-
// layer classifier d' -> classes.
struct Model {
    int input_dim = 0, hidden = 0, feature_dim = 0, classes = 0;
    bool has_decoder = false;
    std::vector<Parameter> params;

    static Model init(int input_dim, int hidden, int feature_dim, int classes, bool decoder, uint64_t seed);

    diff::Bindings bindings() const;
    Parameter& find(const std::string& id);
    const Parameter& find(const std::string& id) const;

    // numeric forward passes (graph-backed)
    Tensor encode(const Tensor& x) const;
    Tensor decode(const Tensor& z) const;
    Tensor logits(const Tensor& x) const;

    std::vector<std::string> encoder_ids() const;
    std::vector<std::string> decoder_ids() const;
    std::vector<std::string> classifier_ids() const;
};

// Graph-side view of a model: one leaf per parameter, memoized so the
// encoder/decoder/classifier can appear any number of times in one graph.
struct ModelGraph {
    diff::Graph& g;
    const Model& model;
    std::map<std::string, diff::NodeId> leaves;

    ModelGraph(diff::Graph& graph, const Model& m);
    diff::NodeId encoder(diff::NodeId x);
    diff::NodeId decoder(diff::NodeId z);
    diff::NodeId classifier(diff::NodeId z);
};

// Sum over domains of the per-domain batch-mean cross entropy.
diff::NodeId classification_loss_node(diff::Graph& g, const std::vector<diff::NodeId>& logit_nodes,
                                      const std::vector<const std::vector<int>*>& labels, int classes);

// Sum over domains of the per-domain batch-mean squared reconstruction error.
diff::NodeId reconstruction_loss_node(diff::Graph& g, const std::vector<diff::NodeId>& inputs,
                                      const std::vector<diff::NodeId>& reconstructions);

struct Batch {
    Tensor features;          // m x d
    std::vector<int> labels;  // length m
};

struct StepRecord {
    double l_c = 0.0;
    double l_wb = 0.0;
    double l_aux = 0.0;  // reconstruction loss, or the MI surrogate trace
};

// Adam/SGD state per parameter id; empty maps mean fresh state.
struct OptimizerState {
    std::map<std::string, Tensor> m1, m2;
    long t = 0;
};

// One optimization step per the configured method. `step_seed` drives the
// per-step stochastic pieces (barycenter init, feature noise).
StepRecord train_step(Model& model, const std::vector<Batch>& batches, const TrainConfig& cfg,
                      OptimizerState& opt, uint64_t step_seed);

struct RunReport {
    Method method = Method::erm;
    uint64_t seed = 0;
    std::vector<StepRecord> epoch_losses;   // per-epoch means
    std::vector<double> val_accuracy;       // per epoch
    int selected_epoch = -1;                // argmax val accuracy, earliest tie
    double test_accuracy = 0.0;             // unseen domain, selected checkpoint
    bool has_test = false;
    double initial_encoded_divergence = 0.0;  // mean pairwise, seen domains
    double final_encoded_divergence = 0.0;    // same measure after the last epoch
};

// Full training run on the seen domains with per-domain 80/20 validation
// splits; evaluates the selected checkpoint on `unseen` when provided.
// `selected_model` (optional) receives the checkpointed model.
RunReport train(const TrainConfig& cfg, const data::DomainDataset& seen, const data::Domain* unseen = nullptr,
                Model* selected_model = nullptr);

double accuracy(const Model& m, const data::Domain& d);

struct LooCell {
    double mean = 0.0;
    double stddev = 0.0;
};

struct LooTable {
    std::vector<std::string> rows;               // one per held-out domain, then "Avg"
    std::vector<std::string> columns;            // method names
    std::vector<std::vector<LooCell>> cells;     // rows x columns
};

// Leave-one-domain-out evaluation over the seed list.
LooTable leave_one_out(const data::DomainDataset& ds, const TrainConfig& cfg, const std::vector<uint64_t>& seeds);

// The five-variant ablation grid under identical seeds and splits.
LooTable ablate(const data::DomainDataset& ds, const TrainConfig& base, const std::vector<uint64_t>& seeds);

}  // namespace otdg::dg
