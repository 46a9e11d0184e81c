#include "fusenas/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "fusenas/errors.hpp"

namespace fusenas {

namespace {

// Bilinear upsample of a coarse grid to (h, w); data generation only.
std::vector<double> upsample_bilinear(const std::vector<double>& grid, int gh, int gw, int h, int w) {
    std::vector<double> out(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        const double fy = (gh - 1) * (h == 1 ? 0.0 : static_cast<double>(y) / (h - 1));
        const int y0 = std::min(static_cast<int>(fy), gh - 2);
        const double ty = fy - y0;
        for (int x = 0; x < w; ++x) {
            const double fx = (gw - 1) * (w == 1 ? 0.0 : static_cast<double>(x) / (w - 1));
            const int x0 = std::min(static_cast<int>(fx), gw - 2);
            const double tx = fx - x0;
            const double v00 = grid[static_cast<size_t>(y0) * gw + x0];
            const double v01 = grid[static_cast<size_t>(y0) * gw + x0 + 1];
            const double v10 = grid[static_cast<size_t>(y0 + 1) * gw + x0];
            const double v11 = grid[static_cast<size_t>(y0 + 1) * gw + x0 + 1];
            out[static_cast<size_t>(y) * w + x] =
                (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
        }
    }
    return out;
}

std::vector<double> smooth_field(int h, int w, Rng& rng) {
    const int g = 5;
    std::vector<double> grid(g * g);
    for (auto& v : grid) v = rng.normal();
    return upsample_bilinear(grid, g, g, h, w);
}

}  // namespace

Sample make_normal_sample(const BenchCfg& cfg, Rng& rng) {
    const int h = cfg.h, w = cfg.w, hw = h * w;
    const auto shared = smooth_field(h, w, rng);
    const auto own_a = smooth_field(h, w, rng);
    const auto own_b = smooth_field(h, w, rng);

    Sample s;
    s.a = Tensor({cfg.c_a, h, w});
    s.b = Tensor({cfg.c_b, h, w});
    s.mask = Mask{h, w, std::vector<uint8_t>(static_cast<size_t>(hw), 0)};
    s.label = 0;

    for (int c = 0; c < cfg.c_a; ++c) {
        const double phase = 0.3 * c - 0.3;
        for (int p = 0; p < hw; ++p)
            s.a[c * hw + p] = 0.5 + 0.35 * std::tanh(0.8 * shared[p] + 0.4 * own_a[p] + phase);
    }
    for (int c = 0; c < cfg.c_b; ++c)
        for (int p = 0; p < hw; ++p)
            s.b[c * hw + p] = 0.5 + 0.35 * std::tanh(0.8 * shared[p] + 0.4 * own_b[p]);
    return s;
}

Sample generate_anomaly(const Sample& normal, Rng& rng, const AnomalyCfg& cfg) {
    if (!(cfg.area_min > 0.0 && cfg.area_max < 1.0 && cfg.area_min <= cfg.area_max))
        throw ConfigError("anomaly area fractions must satisfy 0 < min <= max < 1, got " +
                          std::to_string(cfg.area_min) + ".." + std::to_string(cfg.area_max));
    if (cfg.keep_normal < 0.0 || cfg.keep_normal > 1.0)
        throw ConfigError("keep_normal must lie in [0, 1]");
    if (normal.label != 0) throw std::invalid_argument("generate_anomaly needs a normal sample");

    if (rng.uniform() < cfg.keep_normal) return normal;

    Sample out = normal;
    const int h = normal.mask.h, w = normal.mask.w, hw = h * w;
    const int blobs = 1 + static_cast<int>(rng.uniform_int(3));
    const double total_frac = rng.uniform(cfg.area_min, cfg.area_max);
    const int c_a = normal.a.dim(0), c_b = normal.b.dim(0);

    for (int blob = 0; blob < blobs; ++blob) {
        const double frac = total_frac / blobs;
        const double aspect = rng.uniform(0.5, 2.0);
        double rx = std::sqrt(frac * hw * aspect / 3.14159265358979323846);
        double ry = rx / aspect;
        rx = std::clamp(rx, 1.0, 0.5 * w);
        ry = std::clamp(ry, 1.0, 0.5 * h);
        const double cx = rng.uniform(0.15, 0.85) * w;
        const double cy = rng.uniform(0.15, 0.85) * h;
        const double theta = rng.uniform(0.0, 3.14159265358979323846);
        const double ct = std::cos(theta), st = std::sin(theta);

        std::vector<double> shift_a(static_cast<size_t>(c_a));
        for (auto& d : shift_a) {
            const double mag = rng.uniform(cfg.mag_floor * cfg.mag_a, cfg.mag_a);
            d = rng.uniform() < 0.5 ? -mag : mag;
        }
        std::vector<double> shift_b(static_cast<size_t>(c_b));
        for (auto& d : shift_b) {
            const double mag = rng.uniform(cfg.mag_floor * cfg.mag_b, cfg.mag_b);
            d = rng.uniform() < 0.5 ? -mag : mag;
        }

        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                const double u = (dx * ct + dy * st) / rx;
                const double v = (-dx * st + dy * ct) / ry;
                if (u * u + v * v > 1.0) continue;
                const int p = y * w + x;
                out.mask.on[static_cast<size_t>(p)] = 1;
                for (int c = 0; c < c_a; ++c)
                    out.a[c * hw + p] =
                        std::clamp(out.a[c * hw + p] + shift_a[static_cast<size_t>(c)], 0.0, 1.0);
                for (int c = 0; c < c_b; ++c)
                    out.b[c * hw + p] =
                        std::clamp(out.b[c * hw + p] + shift_b[static_cast<size_t>(c)], 0.0, 1.0);
            }
    }
    out.label = 0;
    for (auto bit : out.mask.on)
        if (bit) out.label = 1;
    return out;
}

std::vector<Sample> make_normal_set(const BenchCfg& cfg, int n, const Rng& base) {
    std::vector<Sample> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng r = base.child("normal", static_cast<uint64_t>(i));
        out.push_back(make_normal_sample(cfg, r));
    }
    return out;
}

std::vector<Sample> make_test_set(const BenchCfg& cfg, const AnomalyCfg& anomaly, int n,
                                  const Rng& base) {
    std::vector<Sample> out;
    out.reserve(static_cast<size_t>(n));
    AnomalyCfg forced = anomaly;
    forced.keep_normal = 0.0;
    for (int i = 0; i < n; ++i) {
        Rng r = base.child("test", static_cast<uint64_t>(i));
        Sample s = make_normal_sample(cfg, r);
        if (i >= n / 2) {
            Rng ar = base.child("test.anomaly", static_cast<uint64_t>(i));
            s = generate_anomaly(s, ar, forced);
        }
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

void put_u32(std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw ParseError("dataset cache truncated");
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

void put_f32_block(std::ofstream& f, const Tensor& t) {
    for (double v : t.data) {
        const float x = static_cast<float>(v);
        uint32_t bits;
        std::memcpy(&bits, &x, 4);
        put_u32(f, bits);
    }
}

void get_f32_block(std::ifstream& f, Tensor& t) {
    for (auto& v : t.data) {
        const uint32_t bits = get_u32(f);
        float x;
        std::memcpy(&x, &bits, 4);
        v = static_cast<double>(x);
    }
}

}  // namespace

void save_dataset(const std::string& path, const std::vector<Sample>& samples) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write dataset cache: " + path);
    if (samples.empty()) throw std::invalid_argument("refusing to cache an empty dataset");
    const int h = samples[0].mask.h, w = samples[0].mask.w;
    const int c_a = samples[0].a.dim(0), c_b = samples[0].b.dim(0);
    f.write("ADNB", 4);
    put_u32(f, 1);
    put_u32(f, static_cast<uint32_t>(samples.size()));
    put_u32(f, static_cast<uint32_t>(h));
    put_u32(f, static_cast<uint32_t>(w));
    put_u32(f, static_cast<uint32_t>(c_a));
    put_u32(f, static_cast<uint32_t>(c_b));
    for (const Sample& s : samples) {
        put_f32_block(f, s.a);
        put_f32_block(f, s.b);
        f.write(reinterpret_cast<const char*>(s.mask.on.data()),
                static_cast<std::streamsize>(s.mask.on.size()));
    }
}

std::vector<Sample> load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open dataset cache: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "ADNB", 4) != 0)
        throw ParseError("dataset cache has wrong magic");
    const uint32_t version = get_u32(f);
    if (version != 1) throw ParseError("unsupported dataset cache version " + std::to_string(version));
    const uint32_t count = get_u32(f);
    const int h = static_cast<int>(get_u32(f));
    const int w = static_cast<int>(get_u32(f));
    const int c_a = static_cast<int>(get_u32(f));
    const int c_b = static_cast<int>(get_u32(f));

    std::vector<Sample> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        Sample s;
        s.a = Tensor({c_a, h, w});
        s.b = Tensor({c_b, h, w});
        s.mask = Mask{h, w, std::vector<uint8_t>(static_cast<size_t>(h) * w)};
        get_f32_block(f, s.a);
        get_f32_block(f, s.b);
        f.read(reinterpret_cast<char*>(s.mask.on.data()),
               static_cast<std::streamsize>(s.mask.on.size()));
        if (!f) throw ParseError("dataset cache truncated");
        s.label = 0;
        for (auto bit : s.mask.on)
            if (bit) s.label = 1;
        out.push_back(std::move(s));
    }
    return out;
}

// --- reconstruction network ----------------------------------------------

namespace {

std::string mrn_key(const std::string& mod, const std::string& layer, const char* which) {
    return "mrn." + mod + "." + layer + "." + which;
}

void add_proj(ParamSet& weights, const std::string& key_base, int c_out, int c_in, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(c_in));
    Tensor w({c_out, c_in});
    for (int i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-s, s);
    weights.add(key_base + ".w", std::move(w));
    weights.add(key_base + ".b", Tensor({c_out}));
}

Graph::NodeId proj(Graph& g, Binder& binder, const ParamSet& weights, const std::string& key_base,
                   Graph::NodeId x) {
    return g.linear_map(x, binder.bind(weights, key_base + ".w"),
                        binder.bind(weights, key_base + ".b"));
}

}  // namespace

void init_mrn_weights(ParamSet& weights, const std::string& mod, int c_in, int channels, Rng& rng) {
    add_proj(weights, "mrn." + mod + ".enc1", channels, c_in, rng);
    add_proj(weights, "mrn." + mod + ".enc2", channels, channels, rng);
    add_proj(weights, "mrn." + mod + ".enc3", channels, channels, rng);
    add_proj(weights, "mrn." + mod + ".enc4", channels, channels, rng);
    add_proj(weights, "mrn." + mod + ".late", channels, channels, rng);
    add_proj(weights, "mrn." + mod + ".dec3", channels, channels, rng);
    add_proj(weights, "mrn." + mod + ".dec2", channels, channels, rng);
    add_proj(weights, "mrn." + mod + ".dec1", channels, channels, rng);
    add_proj(weights, "mrn." + mod + ".out", c_in, channels, rng);
}

MrnFeatures mrn_forward(Graph& g, Binder& binder, const ParamSet& weights, const std::string& mod,
                        Graph::NodeId input, int channels) {
    (void)channels;
    const std::string base = "mrn." + mod + ".";
    const int h = g.value(input).dim(1), w = g.value(input).dim(2);

    MrnFeatures f;
    const Graph::NodeId e1 = g.tanh_(proj(g, binder, weights, base + "enc1", input));
    const Graph::NodeId e2 = g.tanh_(proj(g, binder, weights, base + "enc2", g.avg_pool2(e1)));
    const Graph::NodeId e3 = g.tanh_(proj(g, binder, weights, base + "enc3", g.avg_pool2(e2)));
    const Graph::NodeId e4 = g.tanh_(proj(g, binder, weights, base + "enc4", g.avg_pool2(e3)));
    f.early = e1;
    f.middle = {e2, e3, e4};
    f.late = g.tanh_(proj(g, binder, weights, base + "late", e4));

    const Graph::NodeId d3 =
        g.tanh_(proj(g, binder, weights, base + "dec3", g.resize_nearest(e4, h / 4, w / 4)));
    const Graph::NodeId d2 =
        g.tanh_(proj(g, binder, weights, base + "dec2", g.resize_nearest(d3, h / 2, w / 2)));
    const Graph::NodeId d1 =
        g.tanh_(proj(g, binder, weights, base + "dec1", g.resize_nearest(d2, h, w)));
    f.dec_hidden = d1;
    f.recon = proj(g, binder, weights, base + "out", d1);
    return f;
}

ModalityFeatureNodes to_feature_nodes(const MrnFeatures& f) {
    return ModalityFeatureNodes{f.early, f.middle, f.late};
}

// --- discriminator ---------------------------------------------------------

void init_adn_weights(ParamSet& weights, int channels, Rng& rng) {
    add_proj(weights, "adn.proj1", channels, 3 * channels, rng);
    add_proj(weights, "adn.proj2", 1, channels, rng);
}

Graph::NodeId adn_forward(Graph& g, Binder& binder, const ParamSet& weights,
                          Graph::NodeId mfn_out, Graph::NodeId hidden_a, Graph::NodeId hidden_b,
                          int out_h, int out_w) {
    Graph::NodeId fused = mfn_out;
    if (g.value(fused).dim(1) != out_h || g.value(fused).dim(2) != out_w)
        fused = g.resize_nearest(fused, out_h, out_w);
    const Graph::NodeId stacked =
        g.concat_channels(g.concat_channels(fused, hidden_a), hidden_b);
    const Graph::NodeId hid = g.tanh_(proj(g, binder, weights, "adn.proj1", stacked));
    return g.sigmoid(proj(g, binder, weights, "adn.proj2", hid));
}

// --- scoring and losses ----------------------------------------------------

double image_score(const Tensor& map) {
    const int n = map.numel();
    if (n == 0) throw std::invalid_argument("image_score on an empty map");
    const int k = std::max(1, static_cast<int>(std::ceil(0.01 * n)));
    std::vector<double> v = map.data;
    std::nth_element(v.begin(), v.begin() + (k - 1), v.end(), std::greater<double>());
    double total = 0.0;
    for (int i = 0; i < k; ++i) total += v[static_cast<size_t>(i)];
    return total / k;
}

Graph::NodeId total_loss(Graph& g, Graph::NodeId recon_a, Graph::NodeId clean_a,
                         Graph::NodeId recon_b, Graph::NodeId clean_b, Graph::NodeId map,
                         Graph::NodeId mask_target, double lambda_rec, double lambda_seg) {
    const Graph::NodeId res_a = g.sub(recon_a, clean_a);
    const Graph::NodeId res_b = g.sub(recon_b, clean_b);
    const Graph::NodeId rec =
        g.affine(g.add(g.mean(g.mul(res_a, res_a)), g.mean(g.mul(res_b, res_b))), 0.5, 0.0);
    const Graph::NodeId seg = g.bce_mean(map, mask_target);
    return g.add(g.affine(rec, lambda_rec, 0.0), g.affine(seg, lambda_seg, 0.0));
}

Tensor mask_to_tensor(const Mask& mask) {
    Tensor t({1, mask.h, mask.w});
    for (int i = 0; i < t.numel(); ++i) t[i] = mask.on[static_cast<size_t>(i)] ? 1.0 : 0.0;
    return t;
}

}  // namespace fusenas
