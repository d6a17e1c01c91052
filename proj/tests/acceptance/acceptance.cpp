// Acceptance run: one PASS/FAIL line per criterion. Optional arguments select
// criteria by number (e.g. `acceptance 1 4 10`). Exit status is nonzero when
// any selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mrsr/mrsr.hpp"
#include "support/oracles.hpp"

using namespace mrsr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Accumulates checks; the first few failures are kept for the report line.
class Checker {
public:
    void expect(bool ok, const std::string& what) {
        ++checks_;
        if (ok) return;
        ++failures_;
        if (failures_ <= 3) notes_ += (notes_.empty() ? "" : "; ") + what;
    }
    void note(const std::string& s) { extra_ += (extra_.empty() ? "" : ", ") + s; }
    Outcome outcome() const {
        std::ostringstream os;
        os << checks_ - failures_ << "/" << checks_ << " checks";
        if (!extra_.empty()) os << ", " << extra_;
        if (failures_) os << "; failed: " << notes_;
        return {failures_ == 0, os.str()};
    }

private:
    std::size_t checks_ = 0, failures_ = 0;
    std::string notes_, extra_;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor rand_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    return Tensor(shape, oracle::random_vec(shape_numel(shape), rng, lo, hi));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.numel(); ++i)
        if (a.at(i) != b.at(i)) return false;
    return true;
}

vit::ViTConfig toy_vit(std::size_t extent, std::size_t patch, std::size_t k, std::size_t heads) {
    vit::ViTConfig c;
    c.patch_size = patch;
    c.extents = {extent, extent};
    c.embed_dim = k;
    c.heads = heads;
    c.layers = 1;
    c.mlp_hidden = 8;
    return c;
}

// ---------------------------------------------------------------------------

Outcome gradient_integrity() {
    const auto t0 = std::chrono::steady_clock::now();
    Checker ck;
    std::mt19937_64 rng(101);
    double worst_primitive = 0.0, worst_composite = 0.0;
    auto check_primitive = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> leaves) {
        const double err = grad_check(f, std::move(leaves));
        worst_primitive = std::max(worst_primitive, err);
        ck.expect(err < 1e-4, name + " " + fmt(err));
    };

    for (int point = 0; point < 3; ++point) {
        Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({3, 4}, rng), pos = rand_tensor({3, 4}, rng, 0.5, 2.0);
        Tensor m = rand_tensor({4, 2}, rng), g = rand_tensor({4}, rng, 0.5, 1.5), bias = rand_tensor({4}, rng);
        const Tensor w = rand_tensor({3, 4}, rng);
        auto proj = [&](const Tensor& t) { return sum(mul(t, w)); };
        check_primitive("add", [&] { return proj(add(a, b)); }, {a, b});
        check_primitive("sub", [&] { return proj(sub(a, b)); }, {a, b});
        check_primitive("mul", [&] { return proj(mul(a, b)); }, {a, b});
        check_primitive("div", [&] { return proj(div(a, pos)); }, {a, pos});
        check_primitive("scale", [&] { return proj(scale(a, -1.7)); }, {a});
        check_primitive("add_scalar", [&] { return sum(square(add_scalar(a, 0.3))); }, {a});
        check_primitive("neg", [&] { return proj(neg(a)); }, {a});
        check_primitive("square", [&] { return proj(square(a)); }, {a});
        check_primitive("sqrt", [&] { return proj(sqrt(pos)); }, {pos});
        check_primitive("exp", [&] { return proj(exp(a)); }, {a});
        check_primitive("log", [&] { return proj(log(pos)); }, {pos});
        check_primitive("abs", [&] { return proj(abs(a)); }, {a});
        check_primitive("clamp", [&] { return proj(clamp(a, -0.5, 0.5)); }, {a});
        check_primitive("neg_log_clamped", [&] { return sum(neg_log_clamped(scale(pos, 0.4))); }, {pos});
        check_primitive("relu", [&] { return proj(relu(a)); }, {a});
        check_primitive("gelu", [&] { return proj(gelu(a)); }, {a});
        check_primitive("sigmoid", [&] { return proj(sigmoid(a)); }, {a});
        check_primitive("sum", [&] { return square(sum(a)); }, {a});
        check_primitive("mean", [&] { return square(mean(a)); }, {a});
        check_primitive("sum_axis", [&] { return sum(square(sum_axis(a, 0))); }, {a});
        check_primitive("mean_axis", [&] { return sum(square(mean_axis(a, 1))); }, {a});
        check_primitive("reshape", [&] { return sum(mul(reshape(a, {4, 3}), reshape(w, {4, 3}))); }, {a});
        check_primitive("gather", [&] { return sum(square(gather(a, {0, 5, 5, 11, 2}, {5}))); }, {a});
        check_primitive("transpose", [&] { return sum(square(matmul(transpose(a), b))); }, {a, b});
        check_primitive("slice0", [&] { return sum(square(slice0(a, 1, 3))); }, {a});
        check_primitive("slice_cols", [&] { return sum(square(slice_cols(a, 1, 3))); }, {a});
        check_primitive("concat", [&] { return sum(mul(concat({a, b}, 0), concat({w, w}, 0))); }, {a, b});
        check_primitive("add_broadcast", [&] { return proj(square(add_broadcast(a, bias))); }, {a, bias});
        check_primitive("mul_broadcast", [&] { return proj(mul_broadcast(a, bias)); }, {a, bias});
        check_primitive("matmul", [&] { return sum(square(matmul(a, m))); }, {a, m});
        check_primitive("linear", [&] { return sum(square(linear(a, m, slice0(bias, 0, 2)))); }, {a, m, bias});
        check_primitive("softmax", [&] { return proj(softmax(a, 1)); }, {a});
        check_primitive("layer_norm", [&] { return proj(layer_norm(a, g, bias)); }, {a, g, bias});
        check_primitive("rowwise_cosine", [&] { return sum(square(rowwise_cosine(a, b))); }, {a, b});
        check_primitive("cosine_similarity", [&] { return cosine_similarity(a, b); }, {a, b});
        check_primitive("cross_entropy", [&] { return cross_entropy(bias, 2); }, {bias});

        Tensor x = rand_tensor({2, 2, 6, 6}, rng), k = rand_tensor({3, 2, 3, 3}, rng), kb = rand_tensor({3}, rng);
        Tensor kt = rand_tensor({2, 3, 3, 3}, rng);
        Tensor gam = rand_tensor({2}, rng, 0.5, 1.5), bet = rand_tensor({2}, rng);
        const Tensor wc = rand_tensor({2, 3, 6, 6}, rng), wt = rand_tensor({2, 3, 12, 12}, rng);
        const Tensor wp = rand_tensor({2, 2, 3, 3}, rng), wb = rand_tensor({2, 2, 6, 6}, rng);
        const Tensor wr = rand_tensor({2, 2, 9, 5}, rng);
        BatchNormStats stats = BatchNormStats::init(2);
        check_primitive("conv2d", [&] { return sum(mul(conv2d(x, k, kb, {1, 1, false}), wc)); }, {x, k, kb});
        check_primitive("conv2d_transposed", [&] { return sum(mul(conv2d(x, kt, {}, {2, 1, true}), wt)); }, {x, kt});
        check_primitive("max_pool2d", [&] { return sum(mul(max_pool2d(x, 2, 2), wp)); }, {x});
        check_primitive("batch_norm2d", [&] { return sum(mul(batch_norm2d(x, gam, bet, stats, true), wb)); },
                        {x, gam, bet});
        check_primitive("global_avg_pool", [&] { return sum(square(global_avg_pool(x))); }, {x});
        check_primitive("bicubic_resize", [&] { return sum(mul(bicubic_resize(x, 9, 5), wr)); }, {x});

        const vit::ViTConfig vc = toy_vit(4, 2, 4, 2);
        Tensor img = rand_tensor({1, 4, 4}, rng);
        const Tensor wpatch = rand_tensor({4, 4}, rng);
        check_primitive("patchify", [&] { return sum(mul(vit::patchify(img, vc), wpatch)); }, {img});
        Tensor q = rand_tensor({3, 2}, rng), kk = rand_tensor({3, 2}, rng), v = rand_tensor({3, 2}, rng);
        const Tensor wa = rand_tensor({3, 3}, rng);
        check_primitive("attention_weights", [&] { return sum(mul(vit::attention_weights(q, kk), wa)); }, {q, kk});
        Tensor z = rand_tensor({3, 4}, rng), wq = rand_tensor({4, 2}, rng), wk = rand_tensor({4, 2}, rng),
               wv = rand_tensor({4, 2}, rng);
        check_primitive("self_attention", [&] { return sum(square(vit::self_attention(z, wq, wk, wv))); },
                        {z, wq, wk, wv});
        Tensor logits = rand_tensor({3, 2}, rng);
        const Tensor onehot({3, 2}, {1, 0, 0, 1, 1, 0});
        check_primitive("dice_ce_loss", [&] { return vit::dice_ce_loss(softmax(logits, 1), onehot); }, {logits});
    }

    auto check_composite = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> leaves,
                               std::size_t max_coords) {
        GradCheckOptions opt;
        opt.max_coords = max_coords;
        const double err = grad_check(f, std::move(leaves), opt);
        worst_composite = std::max(worst_composite, err);
        ck.expect(err < 1e-3, name + " " + fmt(err));
    };

    {
        const vit::ViTConfig c = toy_vit(8, 4, 6, 2);
        Rng init(102);
        vit::ViTLayer l = vit::init_layer(c, init);
        l.ln1_gain = rand_tensor({6}, rng, 0.5, 1.5);
        l.mlp_b2 = rand_tensor({6}, rng);
        Tensor z = rand_tensor({4, 6}, rng);
        const Tensor w = rand_tensor({4, 6}, rng);
        check_composite("transformer_block", [&] { return sum(mul(vit::transformer_block(z, l), w)); },
                        {z, l.ln1_gain, l.w_q[0], l.w_k[1], l.w_v[0], l.w_msa, l.ln2_bias, l.mlp_w1, l.mlp_b2}, 0);
    }
    {
        sr::GeneratorConfig c;
        c.residual_blocks = 1;
        c.base_channels = 3;
        Rng init(103);
        sr::Generator g = sr::Generator::make(c, init);
        sr::ResidualBlock& b = g.blocks[0];
        const Tensor x = rand_tensor({2, 3, 5, 5}, rng);
        auto loss = [&] {
            Tensor h = relu(b.bn1(b.conv1(x), true));
            return sum(square(add(x, b.bn2(b.conv2(h), true))));
        };
        check_composite("residual_block", loss, {b.conv1.kernel, b.bn1.gamma, b.bn1.beta, b.conv2.kernel, b.bn2.gamma}, 0);
    }
    {
        Rng init(104);
        vit::ViTConfig vc = toy_vit(16, 4, 8, 2);
        vit::ViTState vs = vit::init_state(vc, init);
        disentangle::AEConfig ac;
        ac.input_extent = 16;
        ac.widths = {2, 2, 2, 2};
        ac.tex_dim = 3;
        ac.decoder_channels = 2;
        ac.disc = {2, 1};
        disentangle::AEState as = disentangle::init_state(ac, init);
        ParameterList vp = vs.parameters(), ap = as.parameters();
        set_trainable(vp, false);
        set_trainable(ap, false);
        sr::GeneratorConfig gc;
        gc.residual_blocks = 2;
        gc.base_channels = 3;
        sr::Generator g = sr::Generator::make(gc, init);
        nn::Discriminator d = nn::Discriminator::make({2, 1}, init);
        d.readout.weight = Tensor({4, 1}, {0.4, -0.3, 0.2, 0.6});
        const Tensor lr = rand_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);
        const sr::Extractors ex{&vs, &vc, &as, &ac};
        check_composite("composite_sr_loss", [&] { return sr::sr_forward(g, d, ex, lr, sr::LossWeights{}, true).total; },
                        {g.head.kernel, g.blocks[0].conv1.kernel, g.blocks[0].bn1.gamma, g.blocks[1].conv2.kernel,
                         g.blocks[1].bn2.beta, g.up[0].kernel, g.tail.kernel, g.tail.bias},
                        10);
    }
    const double secs = seconds_since(t0);
    ck.expect(secs < 120.0, "runtime " + fmt(secs) + " s");
    ck.note("worst primitive " + fmt(worst_primitive, 3) + ", worst composite " + fmt(worst_composite, 3) + ", " +
            fmt(secs, 3) + " s");
    return ck.outcome();
}

Outcome loss_arithmetic() {
    Checker ck;
    const double d = disentangle::disent_total_loss(1.0, 0.5, 0.5);
    const double dt =
        disentangle::disent_total_loss(Tensor::scalar(1.0), Tensor::scalar(0.5), Tensor::scalar(0.5)).item();
    const double s = sr::total_sr_loss(0.1, 0.2, 0.3, 0.4, sr::LossWeights{});
    const double st = sr::total_sr_loss(Tensor::scalar(0.1), Tensor::scalar(0.2), Tensor::scalar(0.3),
                                        Tensor::scalar(0.4), sr::LossWeights{})
                          .item();
    ck.expect(std::fabs(d - 1.7) <= 1e-9, "disentangle total " + fmt(d, 17));
    ck.expect(std::fabs(dt - 1.7) <= 1e-9, "disentangle total (graph) " + fmt(dt, 17));
    ck.expect(std::fabs(s - 0.96) <= 1e-9, "sr total " + fmt(s, 17));
    ck.expect(std::fabs(st - 0.96) <= 1e-9, "sr total (graph) " + fmt(st, 17));
    ck.note("disentangle " + fmt(d, 12) + ", sr " + fmt(s, 12));
    return ck.outcome();
}

Outcome dice_ce() {
    Checker ck;
    std::mt19937_64 rng(301);
    double worst_zero = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + trial % 7, j = 2 + trial % 4;
        std::vector<double> gv(n * j, 0.0);
        std::uniform_int_distribution<std::size_t> cls(0, j - 1);
        for (std::size_t i = 0; i < n; ++i) gv[i * j + cls(rng)] = 1.0;
        const Tensor g({n, j}, gv);
        worst_zero = std::max(worst_zero, std::fabs(vit::dice_ce_loss(g, g).item()));
    }
    ck.expect(worst_zero <= 1e-5, "dice_ce(G,G) " + fmt(worst_zero));
    const std::vector<double> y{0.5, 0.5, 0.5, 0.5}, gv{1, 0, 0, 1};
    const double direct = oracle::dice_ce(y, gv, 2, 2);
    const double got = vit::dice_ce_loss(Tensor({2, 2}, y), Tensor({2, 2}, gv)).item();
    ck.expect(std::fabs(direct - (1.0 / 3.0 + std::log(2.0))) <= 1e-12, "oracle value " + fmt(direct, 17));
    ck.expect(std::fabs(got - direct) <= 1e-6, "balanced J=2 " + fmt(got, 17));
    ck.note("max |dice_ce(G,G)| " + fmt(worst_zero, 3) + ", J=2 case " + fmt(got, 12));
    return ck.outcome();
}

Outcome attention() {
    Checker ck;
    std::mt19937_64 rng(401);
    std::uniform_int_distribution<std::size_t> tokens(1, 12), width(1, 8);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = tokens(rng), k = width(rng);
        const double spread = 0.5 + 4.0 * (trial % 5);
        const Tensor a = vit::attention_weights(rand_tensor({n, k}, rng, -spread, spread),
                                                rand_tensor({n, k}, rng, -spread, spread));
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) row += a.at(i * n + j);
            worst = std::max(worst, std::fabs(row - 1.0));
        }
    }
    ck.expect(worst <= 1e-6, "row sums off by " + fmt(worst));
    bool single_exact = true;
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor a = vit::attention_weights(rand_tensor({1, 5}, rng, -50, 50), rand_tensor({1, 5}, rng, -50, 50));
        single_exact = single_exact && a.shape() == Shape{1, 1} && a.at(0) == 1.0;
    }
    ck.expect(single_exact, "single token is not exactly [[1]]");

    const vit::ViTConfig c = toy_vit(16, 4, 8, 2);
    Rng init(402);
    vit::ViTLayer l = vit::init_layer(c, init);
    for (Tensor* t : {&l.w_msa, &l.mlp_w1, &l.mlp_b1, &l.mlp_w2, &l.mlp_b2}) *t = Tensor::zeros(t->shape());
    for (auto* group : {&l.w_q, &l.w_k, &l.w_v})
        for (Tensor& t : *group) t = Tensor::zeros(t.shape());
    bool identity = true;
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor z = rand_tensor({16, 8}, rng, -4, 4);
        identity = identity && bitwise_equal(vit::transformer_block(z, l), z);
    }
    ck.expect(identity, "zero-weight block is not the identity");
    ck.note("max row-sum error " + fmt(worst, 3));
    return ck.outcome();
}

Outcome metric_oracles() {
    Checker ck;
    std::mt19937_64 rng(501);
    double worst_psnr = 0.0, worst_ssim = 0.0, worst_nmse = 0.0;
    for (int pair = 0; pair < 50; ++pair) {
        const oracle::Vec x = oracle::random_vec(32 * 32, rng, 0.0, 1.0);
        oracle::Vec y = x;
        const double noise = 0.01 + 0.3 * (pair % 7) / 6.0;
        for (double& v : y) v = std::clamp(v + noise * (std::uniform_real_distribution<double>(-1, 1)(rng)), 0.0, 1.0);
        const Image a(32, 32, x), b(32, 32, y);
        double se = 0.0, energy = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            se += (x[i] - y[i]) * (x[i] - y[i]);
            energy += x[i] * x[i];
        }
        const double mse = se / double(x.size());
        worst_psnr = std::max(worst_psnr, std::fabs(psnr(a, b) - 10.0 * std::log10(1.0 / mse)));
        worst_nmse = std::max(worst_nmse, std::fabs(nmse(a, b) - se / energy));
        worst_ssim = std::max(worst_ssim, std::fabs(ssim(a, b) - oracle::ssim(x, y, 32, 32, 1.0)));
        if (pair < 10) {
            ck.expect(ssim(a, a) == 1.0 || std::fabs(ssim(a, a) - 1.0) <= 1e-12, "ssim(x,x) " + fmt(ssim(a, a), 17));
            ck.expect(nmse(a, a) == 0.0, "nmse(x,x) " + fmt(nmse(a, a)));
            ck.expect(std::isinf(psnr(a, a)) && psnr(a, a) > 0, "psnr(x,x) " + fmt(psnr(a, a)));
        }
    }
    ck.expect(worst_psnr <= 1e-6, "psnr off by " + fmt(worst_psnr));
    ck.expect(worst_ssim <= 1e-6, "ssim off by " + fmt(worst_ssim));
    ck.expect(worst_nmse <= 1e-6, "nmse off by " + fmt(worst_nmse));
    ck.note("max deviation psnr " + fmt(worst_psnr, 3) + " ssim " + fmt(worst_ssim, 3) + " nmse " + fmt(worst_nmse, 3));
    return ck.outcome();
}

Outcome swap_identities() {
    Checker ck;
    disentangle::AEConfig c;
    c.input_extent = 32;
    c.widths = {4, 4, 3, 3};
    c.tex_dim = 6;
    c.decoder_channels = 4;
    c.disc = {2, 1};
    Rng init(601);
    const disentangle::AEState s = disentangle::init_state(c, init);
    std::mt19937_64 rng(602);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor x = rand_tensor({2, 1, 32, 32}, rng, 0.0, 1.0);
        const disentangle::LatentCode a = disentangle::encode(x, s, c);
        const disentangle::LatentCode aa = disentangle::swap_codes(a, a);
        ck.expect(bitwise_equal(aa.z_str, a.z_str) && bitwise_equal(aa.z_tex, a.z_tex), "swap(a,a) != a");
        ck.expect(bitwise_equal(disentangle::generate(aa, s, c), disentangle::generate(a, s, c)),
                  "generate(swap(a,a)) != generate(a)");
    }
    return ck.outcome();
}

// ---------------------------------------------------------------------------
// Scaled-down training experiments shared by criteria 7 and 8: 8 synthetic
// 64x64 phantoms, m = 2, one batch of 8 per step, desk preset otherwise.

constexpr std::size_t kSrSteps = 300;

fs::path work_root() { return fs::temp_directory_path() / "mrsr_acceptance"; }

train::RunConfig toy_run_config(const fs::path& out, std::uint64_t seed) {
    train::RunConfig c = train::RunConfig::preset("desk");
    c.set("out", out.string());
    c.set("seed", std::to_string(seed));
    c.set("image_size", "64");
    c.set("scale", "2");
    c.set("train_data", "synthetic:8");
    c.set("val_data", "");
    c.set("test_data", "");
    c.set("gen_blocks", "2");
    c.set("sr_batch", "8");
    c.set("sr_epochs", std::to_string(kSrSteps));
    c.set("pretext_epochs", "20");
    c.set("disent_epochs", "30");
    return c;
}

/// Pretext and disentangle phases on seed 0, trained once and shared.
const fs::path& extractor_dir() {
    static const fs::path dir = [] {
        const fs::path d = work_root() / "extractors";
        fs::remove_all(d);
        fs::create_directories(d);
        const train::RunConfig c = toy_run_config(d, 0);
        const train::Datasets data = train::load_datasets(c);
        train::run_phase(train::Phase::pretext, c, data);
        train::run_phase(train::Phase::disentangle, c, data);
        return d;
    }();
    return dir;
}

struct Fidelity {
    double psnr = 0, ssim = 0, bicubic_psnr = 0, bicubic_ssim = 0, seconds = 0;
};

/// Trains the SR phase and scores the generator on its own training pairs.
Fidelity train_and_score(std::uint64_t seed, double lambda_str, double lambda_tex, const std::string& tag) {
    const fs::path out = work_root() / tag;
    fs::remove_all(out);
    fs::create_directories(out);
    train::RunConfig c = toy_run_config(out, seed);
    c.set("vit_checkpoint", (extractor_dir() / "vit").string());
    c.set("ae_checkpoint", (extractor_dir() / "ae").string());
    std::ostringstream ls, lt;
    ls.precision(17);
    lt.precision(17);
    ls << lambda_str;
    lt << lambda_tex;
    c.set("lambda_str", ls.str());
    c.set("lambda_tex", lt.str());
    const train::Datasets data = train::load_datasets(c);
    const auto t0 = std::chrono::steady_clock::now();
    train::run_phase(train::Phase::sr, c, data);
    Fidelity f;
    f.seconds = seconds_since(t0);
    train::LoadedGenerator g = train::load_generator((out / "sr").string());
    for (const train::Sample& s : data.train) {
        const Image lr = degrade(s.image, 2);
        const Image out_img = sr::sr_generate(g.generator, lr);
        const Image bic = bicubic_resize(lr, s.image.height, s.image.width);
        f.psnr += psnr(s.image, out_img);
        f.ssim += ssim(s.image, out_img);
        f.bicubic_psnr += psnr(s.image, bic);
        f.bicubic_ssim += ssim(s.image, bic);
    }
    const double n = static_cast<double>(data.train.size());
    f.psnr /= n;
    f.ssim /= n;
    f.bicubic_psnr /= n;
    f.bicubic_ssim /= n;
    return f;
}

Outcome overfit_ordering() {
    Checker ck;
    const Fidelity f = train_and_score(0, 1.0, 0.9, "overfit");
    ck.expect(f.psnr > f.bicubic_psnr, "PSNR " + fmt(f.psnr, 6) + " <= bicubic " + fmt(f.bicubic_psnr, 6));
    ck.expect(f.ssim > f.bicubic_ssim, "SSIM " + fmt(f.ssim, 6) + " <= bicubic " + fmt(f.bicubic_ssim, 6));
    ck.expect(f.seconds < 600.0, "runtime " + fmt(f.seconds) + " s");
    ck.note(std::to_string(kSrSteps) + " steps: PSNR " + fmt(f.psnr, 7) + " vs bicubic " + fmt(f.bicubic_psnr, 7) +
            " dB, SSIM " + fmt(f.ssim, 6) + " vs " + fmt(f.bicubic_ssim, 6) + ", SR training " + fmt(f.seconds, 3) +
            " s");
    return ck.outcome();
}

Outcome ablation_direction() {
    Checker ck;
    int wins = 0;
    std::string per_seed;
    for (std::uint64_t seed : {1, 2, 3}) {
        const Fidelity all = train_and_score(seed, 1.0, 0.9, "all_" + std::to_string(seed));
        const Fidelity vit_only = train_and_score(seed, 0.0, 0.0, "vit_only_" + std::to_string(seed));
        const double gain = all.psnr - vit_only.psnr;
        if (gain >= 0.1) ++wins;
        per_seed += (per_seed.empty() ? "" : " ") + ("seed" + std::to_string(seed) + " " + fmt(gain, 3) + " dB");
    }
    ck.expect(wins >= 2, std::to_string(wins) + "/3 seeds gain >= 0.1 dB");
    ck.note("all-terms minus ViT-only PSNR: " + per_seed);
    return ck.outcome();
}

train::RunConfig tiny_run_config(const fs::path& out) {
    train::RunConfig c = train::RunConfig::preset("desk");
    const std::vector<std::pair<std::string, std::string>> v = {
        {"out", out.string()}, {"seed", "11"}, {"image_size", "32"},
        {"train_data", "synthetic:4"}, {"val_data", "synthetic:2"}, {"test_data", "synthetic:2"},
        {"vit_patch", "8"}, {"vit_dim", "8"}, {"vit_heads", "2"}, {"vit_layers", "1"}, {"vit_mlp", "8"},
        {"ae_widths", "2,2,2,2"}, {"ae_tex_dim", "4"}, {"ae_decoder_channels", "2"},
        {"disc_base", "2"}, {"disc_layers", "1"}, {"gen_blocks", "1"}, {"gen_channels", "2"},
        {"pretext_epochs", "3"}, {"pretext_batch", "2"}, {"disent_epochs", "3"}, {"disent_batch", "2"},
        {"sr_epochs", "3"}, {"sr_batch", "2"},
    };
    for (const auto& [k, val] : v) c.set(k, val);
    return c;
}

Outcome determinism() {
    Checker ck;
    std::vector<std::vector<double>> finals(2);
    std::vector<train::TrainRunRecord> last;
    for (int run = 0; run < 2; ++run) {
        const fs::path out = work_root() / ("determinism" + std::to_string(run));
        fs::remove_all(out);
        fs::create_directories(out);
        const train::RunConfig c = tiny_run_config(out);
        const train::Datasets data = train::load_datasets(c);
        for (train::Phase p : {train::Phase::pretext, train::Phase::disentangle, train::Phase::sr}) {
            const train::TrainRunRecord r = train::run_phase(p, c, data);
            finals[run].push_back(r.final_train_loss());
            if (run == 1) last.push_back(r);
        }
    }
    double worst = 0.0;
    for (std::size_t p = 0; p < 3; ++p) worst = std::max(worst, std::fabs(finals[0][p] - finals[1][p]));
    ck.expect(worst < 1e-6, "final loss differs by " + fmt(worst));

    bool exact = true;
    for (const train::TrainRunRecord& r : last) {
        const fs::path path = work_root() / "roundtrip.csv";
        train::emit_loss_csv(r, path.string());
        const train::TrainRunRecord back = train::parse_loss_csv(path.string());
        exact = exact && back.component_names == r.component_names && back.epochs.size() == r.epochs.size();
        for (std::size_t e = 0; exact && e < r.epochs.size(); ++e) {
            const auto &a = r.epochs[e], &b = back.epochs[e];
            auto same = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
            exact = a.epoch == b.epoch && same(a.train_loss, b.train_loss) && same(a.val_loss, b.val_loss) &&
                    same(a.test_loss, b.test_loss) && a.components.size() == b.components.size();
            for (std::size_t k = 0; exact && k < a.components.size(); ++k) exact = same(a.components[k], b.components[k]);
        }
    }
    ck.expect(exact, "loss CSV round trip is not exact");
    ck.note("max final-loss difference " + fmt(worst, 3));
    return ck.outcome();
}

Outcome shape_contracts() {
    Checker ck;
    std::mt19937_64 rng(1001);
    std::uniform_int_distribution<std::size_t> ext(2, 20);
    for (int m : {2, 4}) {
        sr::GeneratorConfig c;
        c.scale = m;
        c.residual_blocks = 1;
        c.base_channels = 3;
        Rng init(1002);
        sr::Generator g = sr::Generator::make(c, init);
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t h = ext(rng), w = ext(rng);
            const Image out = sr::sr_generate(g, Image(h, w, 0.5));
            ck.expect(out.height == m * h && out.width == m * w,
                      "m=" + std::to_string(m) + " " + std::to_string(h) + "x" + std::to_string(w));
        }
    }
    std::uniform_int_distribution<std::size_t> grid(1, 4);
    for (std::size_t p : {2u, 4u, 8u}) {
        for (int trial = 0; trial < 5; ++trial) {
            vit::ViTConfig c2;
            c2.patch_size = p;
            c2.extents = {p * grid(rng), p * grid(rng)};
            const Tensor img = Tensor::zeros({1, c2.extents[0], c2.extents[1]});
            ck.expect(vit::patchify(img, c2).dim(0) == c2.extents[0] * c2.extents[1] / (p * p), "2D patch count");
            vit::ViTConfig c3 = c2;
            c3.spatial_rank = 3;
            c3.extents = {p * grid(rng), p * grid(rng), p * grid(rng)};
            const Tensor vol = Tensor::zeros({c3.extents[0], c3.extents[1], c3.extents[2]});
            ck.expect(vit::patchify(vol, c3).dim(0) == c3.extents[0] * c3.extents[1] * c3.extents[2] / (p * p * p),
                      "3D patch count");
            auto throws = [](const std::function<void()>& f) {
                try {
                    f();
                } catch (const DimensionError&) {
                    return true;
                }
                return false;
            };
            ck.expect(throws([&] { vit::patchify(Tensor::zeros({c2.extents[0] + 1, c2.extents[1]}), c2); }),
                      "non-divisible 2D input accepted");
            ck.expect(throws([&] { vit::patchify(Tensor::zeros({c3.extents[0], c3.extents[1], c3.extents[2] + 1}), c3); }),
                      "non-divisible 3D input accepted");
        }
    }
    return ck.outcome();
}

}  // namespace

int main(int argc, char** argv) {
    std::setvbuf(stdout, nullptr, _IOLBF, 0);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient integrity", gradient_integrity},
        {"loss arithmetic", loss_arithmetic},
        {"dice + cross-entropy", dice_ce},
        {"attention correctness", attention},
        {"metric oracle equivalence", metric_oracles},
        {"swap identities", swap_identities},
        {"overfit ordering vs bicubic", overfit_ordering},
        {"ablation direction (all terms vs ViT only)", ablation_direction},
        {"determinism", determinism},
        {"shape contracts", shape_contracts},
    };
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected.empty() && !selected.count(i + 1)) continue;
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("criterion %zu %s: %s (%s) [%.1f s]\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                    o.detail.c_str(), seconds_since(t0));
    }
    return failed == 0 ? 0 : 1;
}
