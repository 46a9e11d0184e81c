#pragma once

#include <array>
#include <string>
#include <vector>

#include "fusenas/graph.hpp"
#include "fusenas/metrics.hpp"
#include "fusenas/params.hpp"
#include "fusenas/rng.hpp"
#include "fusenas/search_space.hpp"

namespace fusenas {

// ---------------------------------------------------------------------------
// Synthetic two-modality benchmark plus the surrounding anomaly-detection
// skeleton: anomaly generator, per-modality reconstruction encoder/decoder
// emitting the early/middle/late feature ladder, pixel discriminator, losses.
// ---------------------------------------------------------------------------

// One benchmark instance. Pixels lie in [0, 1]; label == 1 iff the mask has
// at least one positive pixel.
struct Sample {
    Tensor a;   // color-like modality (C_a, H, W)
    Tensor b;   // depth-like modality (C_b, H, W)
    Mask mask;  // ground-truth anomaly map
    int label = 0;
};

struct BenchCfg {
    int h = 32, w = 32;
    int c_a = 3, c_b = 1;
};

struct AnomalyCfg {
    double area_min = 0.01;     // union blob coverage target range
    double area_max = 0.08;
    double keep_normal = 0.0;   // probability of returning the input unchanged
    double mag_a = 0.45;        // max additive color shift (modality a)
    double mag_b = 0.55;        // max additive depth offset (modality b)
    double mag_floor = 0.4;     // |shift| drawn from [mag_floor * mag, mag]
};

// Smooth correlated random fields per modality; anomaly-free (label 0).
Sample make_normal_sample(const BenchCfg& cfg, Rng& rng);

// Plants 1-3 random rotated elliptical blobs and perturbs both modalities
// inside the union mask (additive shifts, clamped to [0, 1]); pixels outside
// the mask are never altered. With probability keep_normal the input sample
// is returned unchanged.
Sample generate_anomaly(const Sample& normal, Rng& rng, const AnomalyCfg& cfg);

// Normal-only training pool; sample i depends only on (rng, i).
std::vector<Sample> make_normal_set(const BenchCfg& cfg, int n, const Rng& base);

// Evaluation set: first half normal, second half anomalous.
std::vector<Sample> make_test_set(const BenchCfg& cfg, const AnomalyCfg& anomaly, int n,
                                  const Rng& base);

// Flat binary cache: header {magic "ADNB", version, count, H, W, C_a, C_b}
// (u32 little-endian) then per sample the two float32 pixel blocks and the
// mask bytes. Labels are recomputed from masks on load.
void save_dataset(const std::string& path, const std::vector<Sample>& samples);
std::vector<Sample> load_dataset(const std::string& path);

// --- reconstruction network ----------------------------------------------

// Per-modality feature handles inside one graph.
struct MrnFeatures {
    Graph::NodeId early;                  // (C, H, W)
    std::array<Graph::NodeId, 3> middle;  // (C, H/2), (C, H/4), (C, H/8)
    Graph::NodeId late;                   // (C, H/8)
    Graph::NodeId dec_hidden;             // decoder's last hidden feature (C, H, W)
    Graph::NodeId recon;                  // reconstruction (C_mod, H, W)
};

// Strided encoder (1x1 projections + 2x2 average pooling + tanh, 4 stages)
// with a mirrored nearest-upsample decoder. The late feature is a separate
// projection head on the deepest stage; the reconstruction head is linear.
void init_mrn_weights(ParamSet& weights, const std::string& mod, int c_in, int channels, Rng& rng);

MrnFeatures mrn_forward(Graph& g, Binder& binder, const ParamSet& weights, const std::string& mod,
                        Graph::NodeId input, int channels);

ModalityFeatureNodes to_feature_nodes(const MrnFeatures& f);

// --- discriminator ---------------------------------------------------------

void init_adn_weights(ParamSet& weights, int channels, Rng& rng);

// Concatenates the (resized) fusion output with both decoder hidden features,
// applies two 1x1 projections with a tanh between, sigmoid per pixel.
Graph::NodeId adn_forward(Graph& g, Binder& binder, const ParamSet& weights,
                          Graph::NodeId mfn_out, Graph::NodeId hidden_a, Graph::NodeId hidden_b,
                          int out_h, int out_w);

// --- scoring and losses ----------------------------------------------------

// Mean of the top-1% highest pixel scores (ceil of 1% of the pixel count,
// at least one pixel).
double image_score(const Tensor& map);

// lambda_rec * (mean squared residual against the clean pre-anomaly target,
// averaged over the two modalities) + lambda_seg * (pixel BCE against the
// ground-truth mask).
Graph::NodeId total_loss(Graph& g, Graph::NodeId recon_a, Graph::NodeId clean_a,
                         Graph::NodeId recon_b, Graph::NodeId clean_b, Graph::NodeId map,
                         Graph::NodeId mask_target, double lambda_rec, double lambda_seg);

Tensor mask_to_tensor(const Mask& mask);

}  // namespace fusenas
