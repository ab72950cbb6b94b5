#include "kedit/tiny_lm.hpp"

#include "kedit/error.hpp"
#include "kedit/lm_kernels.hpp"
#include "kedit/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace kedit {

namespace {

constexpr float k_ln_eps = 1e-5f;

std::string layer_name(int l, const char * suffix) {
    return "layers." + std::to_string(l) + "." + suffix;
}

int meta_int(const StateDict::Meta & meta, const std::string & key) {
    auto it = meta.find(key);
    if (it == meta.end()) {
        throw ConfigError("checkpoint meta lacks model field '" + key + "'");
    }
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) {
            throw std::invalid_argument("trailing");
        }
        return static_cast<int>(v);
    } catch (const std::exception &) {
        throw ConfigError("checkpoint meta field '" + key + "' is not an integer");
    }
}

}  // namespace

void TinyLmConfig::validate() const {
    if (vocab_size < tokens::min_vocab) {
        throw ConfigError("vocab_size must be >= " + std::to_string(tokens::min_vocab));
    }
    if (d_model <= 0 || n_heads <= 0 || d_ffn <= 0 || max_seq_len <= 1) {
        throw ConfigError("model dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                          std::to_string(n_heads) + ")");
    }
    if (n_layers < 6) {
        throw ConfigError("n_layers must be >= 6 so that layer index 5 exists");
    }
}

void TinyLmConfig::to_meta(StateDict::Meta & meta) const {
    meta["lm.vocab_size"] = std::to_string(vocab_size);
    meta["lm.d_model"] = std::to_string(d_model);
    meta["lm.n_layers"] = std::to_string(n_layers);
    meta["lm.n_heads"] = std::to_string(n_heads);
    meta["lm.d_ffn"] = std::to_string(d_ffn);
    meta["lm.max_seq_len"] = std::to_string(max_seq_len);
    meta["lm.seed"] = std::to_string(seed);
}

TinyLmConfig TinyLmConfig::from_meta(const StateDict::Meta & meta) {
    TinyLmConfig c;
    c.vocab_size = meta_int(meta, "lm.vocab_size");
    c.d_model = meta_int(meta, "lm.d_model");
    c.n_layers = meta_int(meta, "lm.n_layers");
    c.n_heads = meta_int(meta, "lm.n_heads");
    c.d_ffn = meta_int(meta, "lm.d_ffn");
    c.max_seq_len = meta_int(meta, "lm.max_seq_len");
    auto it = meta.find("lm.seed");
    c.seed = it == meta.end() ? 0 : std::stoull(it->second);
    c.validate();
    return c;
}

std::string TinyLmConfig::fingerprint() const {
    std::ostringstream os;
    os << "V" << vocab_size << "-D" << d_model << "-L" << n_layers << "-H" << n_heads << "-F" << d_ffn << "-S"
       << max_seq_len;
    return os.str();
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const TinyLmConfig & cfg) {
    const auto V = static_cast<std::size_t>(cfg.vocab_size);
    const auto D = static_cast<std::size_t>(cfg.d_model);
    const auto F = static_cast<std::size_t>(cfg.d_ffn);
    const auto S = static_cast<std::size_t>(cfg.max_seq_len);
    std::vector<std::pair<std::string, Shape>> out{
        {"tok_emb", {V, D}}, {"pos_emb", {S, D}}, {"head.w", {D, V}}, {"ln_f.gain", {D}}, {"ln_f.bias", {D}},
    };
    for (int l = 0; l < cfg.n_layers; ++l) {
        out.push_back({layer_name(l, "ln1.gain"), {D}});
        out.push_back({layer_name(l, "ln1.bias"), {D}});
        out.push_back({layer_name(l, "attn.wq"), {D, D}});
        out.push_back({layer_name(l, "attn.wk"), {D, D}});
        out.push_back({layer_name(l, "attn.wv"), {D, D}});
        out.push_back({layer_name(l, "attn.wo"), {D, D}});
        out.push_back({layer_name(l, "ln2.gain"), {D}});
        out.push_back({layer_name(l, "ln2.bias"), {D}});
        out.push_back({layer_name(l, "ffn.w1"), {D, F}});
        out.push_back({layer_name(l, "ffn.b1"), {F}});
        out.push_back({layer_name(l, "ffn.w2"), {F, D}});
        out.push_back({layer_name(l, "ffn.b2"), {D}});
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string ffn_prefix(int layer) {
    return "layers." + std::to_string(layer) + ".ffn.";
}

TinyLm::TinyLm(TinyLmConfig cfg, StateDict weights) : cfg_(cfg), weights_(std::move(weights)) {
    cfg_.validate();
    const auto layout = parameter_layout(cfg_);
    if (weights_.size() != layout.size()) {
        throw ShapeError("model expects " + std::to_string(layout.size()) + " tensors, state dict has " +
                         std::to_string(weights_.size()));
    }
    for (const auto & [name, shape] : layout) {
        if (!weights_.contains(name)) {
            throw ShapeError("state dict is missing tensor '" + name + "'");
        }
        if (weights_.at(name).shape() != shape) {
            throw ShapeError("tensor '" + name + "' has shape " + shape_str(weights_.at(name).shape()) +
                             ", expected " + shape_str(shape));
        }
    }
    cfg_.to_meta(weights_.meta());
}

TinyLm TinyLm::init_random(const TinyLmConfig & cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    const float base_std = 0.02f;
    const float resid_std = 0.02f / std::sqrt(2.0f * static_cast<float>(cfg.n_layers));

    StateDict w;
    for (const auto & [name, shape] : parameter_layout(cfg)) {
        Tensor t(shape);
        const bool is_gain = name.ends_with(".gain");
        const bool is_bias = name.ends_with(".bias") || name.ends_with(".b1") || name.ends_with(".b2");
        if (is_gain) {
            t.fill(1.0f);
        } else if (!is_bias) {
            const float std = (name.ends_with("attn.wo") || name.ends_with("ffn.w2")) ? resid_std : base_std;
            for (auto & v : t.data()) {
                v = std * normal(rng);
            }
        }
        w.set(name, std::move(t));
    }
    return TinyLm(cfg, std::move(w));
}

void TinyLm::check_tokens(std::span<const int> tokens) const {
    if (tokens.empty()) {
        throw InputError("token sequence is empty");
    }
    if (tokens.size() > static_cast<std::size_t>(cfg_.max_seq_len)) {
        throw InputError("token sequence of length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                         std::to_string(cfg_.max_seq_len));
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] < 0 || tokens[i] >= cfg_.vocab_size) {
            throw InputError("token id " + std::to_string(tokens[i]) + " at position " + std::to_string(i) +
                             " is outside the vocabulary");
        }
    }
}

Tensor TinyLm::forward_logits(std::span<const int> tokens) const {
    const auto tr = kernels::forward_trace<float>(*this, tokens);
    const auto T = static_cast<std::size_t>(tr.logits.rows());
    const auto V = static_cast<std::size_t>(tr.logits.cols());
    return Tensor({T, V}, std::vector<float>(tr.logits.data(), tr.logits.data() + T * V));
}

double TinyLm::sequence_nll(std::span<const int> prompt, std::span<const int> target) const {
    if (target.empty()) {
        throw InputError("sequence_nll: target is empty");
    }
    if (prompt.empty()) {
        throw InputError("sequence_nll: prompt is empty");
    }
    if (prompt.size() + target.size() > static_cast<std::size_t>(cfg_.max_seq_len)) {
        throw InputError("sequence_nll: prompt+target exceeds max_seq_len");
    }
    const auto input = kernels::example_input({{prompt.begin(), prompt.end()}, {target.begin(), target.end()}});
    // Double precision so the value agrees with the gradient engine's loss.
    const auto tr = kernels::forward_trace<double>(*this, input);
    return kernels::target_nll<double>(tr, prompt.size(), target, nullptr);
}

std::vector<int> TinyLm::greedy_decode(std::span<const int> prompt, std::size_t max_new) const {
    check_tokens(prompt);
    std::vector<int> ctx(prompt.begin(), prompt.end());
    std::vector<int> out;
    while (out.size() < max_new && ctx.size() < static_cast<std::size_t>(cfg_.max_seq_len)) {
        const auto tr = kernels::forward_trace<float>(*this, ctx);
        const auto last = tr.logits.row(tr.logits.rows() - 1);
        int best = 0;
        for (int v = 1; v < last.cols(); ++v) {
            if (last(v) > last(best)) {
                best = v;
            }
        }
        if (best == tokens::eos) {
            break;
        }
        out.push_back(best);
        ctx.push_back(best);
    }
    return out;
}

double TinyLm::perplexity(const std::vector<std::vector<int>> & corpus) const {
    if (corpus.empty()) {
        throw InputError("perplexity: corpus is empty");
    }
    double total = 0.0;
    std::size_t count = 0;
    for (const auto & seq : corpus) {
        if (seq.size() < 2) {
            continue;
        }
        const std::span<const int> s(seq);
        const double nll = sequence_nll(s.first(1), s.subspan(1));
        total += nll * static_cast<double>(seq.size() - 1);
        count += seq.size() - 1;
    }
    if (count == 0) {
        throw InputError("perplexity: corpus has no next-token predictions");
    }
    return std::exp(total / static_cast<double>(count));
}

// ---------------------------------------------------------------------------
// kernels
// ---------------------------------------------------------------------------

namespace kernels {

namespace {

template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

using MapMatC = Eigen::Map<const MatF>;
using MapVecC = Eigen::Map<const RowVec<float>>;

MapMatC wmat(const TinyLm & m, const std::string & name) {
    const Tensor & t = m.weights().at(name);
    return MapMatC(t.ptr(), static_cast<Eigen::Index>(t.shape()[0]), static_cast<Eigen::Index>(t.shape()[1]));
}

MapVecC wvec(const TinyLm & m, const std::string & name) {
    const Tensor & t = m.weights().at(name);
    return MapVecC(t.ptr(), static_cast<Eigen::Index>(t.numel()));
}

constexpr double k_gelu_c = 0.7978845608028654;  // sqrt(2/pi)

template <class S>
S gelu(S u) {
    const S t = std::tanh(S(k_gelu_c) * (u + S(0.044715) * u * u * u));
    return S(0.5) * u * (S(1) + t);
}

template <class S>
S gelu_grad(S u) {
    const S inner = S(k_gelu_c) * (u + S(0.044715) * u * u * u);
    const S t = std::tanh(inner);
    return S(0.5) * (S(1) + t) + S(0.5) * u * (S(1) - t * t) * S(k_gelu_c) * (S(1) + S(3 * 0.044715) * u * u);
}

template <class S>
void layer_norm(const Mat<S> & x, const RowVec<S> & gain, const RowVec<S> & bias, Mat<S> & out, Mat<S> * xhat,
                std::vector<S> * rstd_out) {
    const auto T = x.rows();
    const auto D = x.cols();
    out.resize(T, D);
    if (xhat) {
        xhat->resize(T, D);
        rstd_out->resize(static_cast<std::size_t>(T));
    }
    for (Eigen::Index t = 0; t < T; ++t) {
        const S mean = x.row(t).sum() / S(D);
        const S var = (x.row(t).array() - mean).square().sum() / S(D);
        const S rstd = S(1) / std::sqrt(var + S(k_ln_eps));
        const RowVec<S> xh = (x.row(t).array() - mean) * rstd;
        out.row(t) = xh.cwiseProduct(gain) + bias;
        if (xhat) {
            xhat->row(t) = xh;
            (*rstd_out)[static_cast<std::size_t>(t)] = rstd;
        }
    }
}

// dx from dy for y = xhat * gain + bias; accumulates dgain/dbias when given.
template <class S, class G>
void layer_norm_backward(const Mat<S> & dy, const Mat<S> & xhat, const std::vector<S> & rstd, const G & gain,
                         Tensor * dgain, Tensor * dbias, Mat<S> & dx) {
    const auto T = dy.rows();
    const auto D = dy.cols();
    dx.resize(T, D);
    if (dgain) {
        Eigen::Map<RowVec<float>> g(dgain->ptr(), D);
        g += (dy.array() * xhat.array()).colwise().sum().matrix().template cast<float>();
    }
    if (dbias) {
        Eigen::Map<RowVec<float>> b(dbias->ptr(), D);
        b += dy.colwise().sum().template cast<float>();
    }
    for (Eigen::Index t = 0; t < T; ++t) {
        const RowVec<S> dxh = dy.row(t).cwiseProduct(gain);
        const S mean_dxh = dxh.mean();
        const S mean_dxh_xh = dxh.cwiseProduct(xhat.row(t)).mean();
        dx.row(t) = (dxh.array() - mean_dxh - xhat.row(t).array() * mean_dxh_xh) * rstd[static_cast<std::size_t>(t)];
    }
}

template <class S>
auto cast_mat(MapMatC m) {
    if constexpr (std::is_same_v<S, float>) {
        return m;
    } else {
        return Mat<S>(m.cast<S>());
    }
}

template <class S>
auto cast_vec(MapVecC v) {
    if constexpr (std::is_same_v<S, float>) {
        return v;
    } else {
        return RowVec<S>(v.cast<S>());
    }
}

// Shared forward; records activations when `tr` is given.
template <class S>
Mat<S> forward_impl(const TinyLm & m, std::span<const int> tokens, ForwardTrace<S> * tr) {
    m.check_tokens(tokens);
    const auto & cfg = m.config();
    const auto T = static_cast<Eigen::Index>(tokens.size());
    const Eigen::Index D = cfg.d_model;
    const Eigen::Index H = cfg.n_heads;
    const Eigen::Index hd = D / H;
    const S scale = S(1) / std::sqrt(S(hd));

    const auto tok_emb = wmat(m, "tok_emb");
    const auto pos_emb = wmat(m, "pos_emb");
    Mat<S> x(T, D);
    for (Eigen::Index t = 0; t < T; ++t) {
        x.row(t) = (tok_emb.row(tokens[static_cast<std::size_t>(t)]) + pos_emb.row(t)).template cast<S>();
    }
    if (tr) {
        tr->tokens.assign(tokens.begin(), tokens.end());
        tr->layers.resize(static_cast<std::size_t>(cfg.n_layers));
    }

    Mat<S> h, q, k, v, cat(T, D), pre, act;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        LayerTrace<S> * lt = tr ? &tr->layers[static_cast<std::size_t>(l)] : nullptr;
        Mat<S> * xhat = nullptr;
        std::vector<S> * rstd = nullptr;
        if (lt) {
            lt->x_in = x;
            xhat = &lt->ln1_xhat;
            rstd = &lt->ln1_rstd;
        }
        layer_norm<S>(x, cast_vec<S>(wvec(m, p + "ln1.gain")), cast_vec<S>(wvec(m, p + "ln1.bias")), h, xhat, rstd);
        q.noalias() = h * cast_mat<S>(wmat(m, p + "attn.wq"));
        k.noalias() = h * cast_mat<S>(wmat(m, p + "attn.wk"));
        v.noalias() = h * cast_mat<S>(wmat(m, p + "attn.wv"));
        if (lt) {
            lt->ln1_out = h;
            lt->q = q;
            lt->k = k;
            lt->v = v;
            lt->probs.assign(static_cast<std::size_t>(H), Mat<S>());
        }
        for (Eigen::Index hh = 0; hh < H; ++hh) {
            Mat<S> scores = q.middleCols(hh * hd, hd) * k.middleCols(hh * hd, hd).transpose() * scale;
            for (Eigen::Index i = 0; i < T; ++i) {
                const S mx = scores.row(i).head(i + 1).maxCoeff();
                S sum = 0;
                for (Eigen::Index j = 0; j <= i; ++j) {
                    const S e = std::exp(scores(i, j) - mx);
                    scores(i, j) = e;
                    sum += e;
                }
                for (Eigen::Index j = 0; j <= i; ++j) {
                    scores(i, j) /= sum;
                }
                for (Eigen::Index j = i + 1; j < T; ++j) {
                    scores(i, j) = 0;
                }
            }
            cat.middleCols(hh * hd, hd).noalias() = scores * v.middleCols(hh * hd, hd);
            if (lt) lt->probs[static_cast<std::size_t>(hh)] = scores;
        }
        x.noalias() += cat * cast_mat<S>(wmat(m, p + "attn.wo"));
        if (lt) {
            lt->attn_cat = cat;
            lt->x_mid = x;
            xhat = &lt->ln2_xhat;
            rstd = &lt->ln2_rstd;
        }

        layer_norm<S>(x, cast_vec<S>(wvec(m, p + "ln2.gain")), cast_vec<S>(wvec(m, p + "ln2.bias")), h, xhat, rstd);
        pre.noalias() = h * cast_mat<S>(wmat(m, p + "ffn.w1"));
        pre.rowwise() += cast_vec<S>(wvec(m, p + "ffn.b1"));
        act = pre.unaryExpr([](S u) { return gelu(u); });
        x.noalias() += act * cast_mat<S>(wmat(m, p + "ffn.w2"));
        x.rowwise() += cast_vec<S>(wvec(m, p + "ffn.b2"));
        if (lt) {
            lt->ln2_out = h;
            lt->pre_act = pre;
            lt->act = act;
        }
    }

    Mat<S> * xhat = nullptr;
    std::vector<S> * rstd = nullptr;
    if (tr) {
        tr->x_final = x;
        xhat = &tr->lnf_xhat;
        rstd = &tr->lnf_rstd;
    }
    layer_norm<S>(x, cast_vec<S>(wvec(m, "ln_f.gain")), cast_vec<S>(wvec(m, "ln_f.bias")), h, xhat, rstd);
    Mat<S> logits = h * cast_mat<S>(wmat(m, "head.w"));
    if (tr) {
        tr->lnf_out = h;
        tr->logits = logits;
    }
    return logits;
}

// Position of a parameter in the forward order; backprop can stop once it has
// passed the lowest requested block.
int block_position(const std::string & name) {
    if (name == "tok_emb" || name == "pos_emb") {
        return 0;
    }
    if (name.rfind("layers.", 0) == 0) {
        const auto dot = name.find('.', 7);
        const int l = std::stoi(name.substr(7, dot - 7));
        const std::string rest = name.substr(dot + 1);
        const bool attn_half = rest.rfind("ln1.", 0) == 0 || rest.rfind("attn.", 0) == 0;
        return 1 + 2 * l + (attn_half ? 0 : 1);
    }
    return 1 << 20;
}

Tensor * sink_at(const GradSink & sink, const std::string & name) {
    auto it = sink.find(name);
    return it == sink.end() ? nullptr : it->second;
}

template <class E>
void accumulate(Tensor * g, const E & value) {
    if (g) {
        Eigen::Map<MatF>(g->ptr(), value.rows(), value.cols()) += value.template cast<float>();
    }
}

template <class E>
void accumulate_row(Tensor * g, const E & value) {
    if (g) {
        Eigen::Map<RowVec<float>>(g->ptr(), value.cols()) += value.template cast<float>();
    }
}

}  // namespace

template <class S>
ForwardTrace<S> forward_trace(const TinyLm & m, std::span<const int> tokens) {
    ForwardTrace<S> tr;
    forward_impl<S>(m, tokens, &tr);
    return tr;
}

Mat<double> forward_logits_f64(const TinyLm & m, std::span<const int> tokens) {
    return forward_impl<double>(m, tokens, static_cast<ForwardTrace<double> *>(nullptr));
}

std::vector<int> example_input(const SupervisedExample & ex) {
    std::vector<int> input = ex.prompt;
    input.insert(input.end(), ex.target.begin(), ex.target.end());
    input.pop_back();
    return input;
}

template <class S>
double target_nll(const ForwardTrace<S> & tr, std::size_t prompt_len, std::span<const int> target, Mat<S> * dlogits) {
    const auto & logits = tr.logits;
    if (dlogits) {
        dlogits->setZero(logits.rows(), logits.cols());
    }
    const double inv_n = 1.0 / static_cast<double>(target.size());
    double total = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(prompt_len - 1 + i);
        const auto r = logits.row(row);
        const double mx = r.maxCoeff();
        double sum = 0.0;
        for (Eigen::Index c = 0; c < r.cols(); ++c) {
            sum += std::exp(static_cast<double>(r(c)) - mx);
        }
        const double lse = mx + std::log(sum);
        total += lse - static_cast<double>(r(target[i]));
        if (dlogits) {
            for (Eigen::Index c = 0; c < r.cols(); ++c) {
                (*dlogits)(row, c) = static_cast<S>(std::exp(static_cast<double>(r(c)) - lse) * inv_n);
            }
            (*dlogits)(row, target[i]) -= static_cast<S>(inv_n);
        }
    }
    return total * inv_n;
}

template <class S>
void backward(const TinyLm & m, const ForwardTrace<S> & tr, const Mat<S> & dlogits, const GradSink & sink) {
    if (sink.empty()) {
        return;
    }
    int lowest = 1 << 20;
    for (const auto & [name, _] : sink) {
        lowest = std::min(lowest, block_position(name));
    }
    const auto & cfg = m.config();
    const Eigen::Index T = static_cast<Eigen::Index>(tr.tokens.size());
    const Eigen::Index D = cfg.d_model;
    const Eigen::Index H = cfg.n_heads;
    const Eigen::Index hd = D / H;
    const S scale = S(1) / std::sqrt(S(hd));

    accumulate(sink_at(sink, "head.w"), tr.lnf_out.transpose() * dlogits);
    if (lowest >= (1 << 20)) {
        // only the head or final norm requested
        if (!sink_at(sink, "ln_f.gain") && !sink_at(sink, "ln_f.bias")) {
            return;
        }
    }
    Mat<S> dh = dlogits * cast_mat<S>(wmat(m, "head.w")).transpose();
    Mat<S> dx;
    layer_norm_backward(dh, tr.lnf_xhat, tr.lnf_rstd, cast_vec<S>(wvec(m, "ln_f.gain")), sink_at(sink, "ln_f.gain"),
                        sink_at(sink, "ln_f.bias"), dx);

    Mat<S> tmp, dact, dpre, dcat, dq(T, D), dk(T, D), dv(T, D);
    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        if (lowest > 2 + 2 * l) {
            break;
        }
        const std::string p = "layers." + std::to_string(l) + ".";
        const LayerTrace<S> & lt = tr.layers[static_cast<std::size_t>(l)];

        // feed-forward block: x += gelu(ln2(x) W1 + b1) W2 + b2
        accumulate(sink_at(sink, p + "ffn.w2"), lt.act.transpose() * dx);
        accumulate_row(sink_at(sink, p + "ffn.b2"), dx.colwise().sum());
        dact.noalias() = dx * cast_mat<S>(wmat(m, p + "ffn.w2")).transpose();
        dpre = dact.cwiseProduct(lt.pre_act.unaryExpr([](S u) { return gelu_grad(u); }));
        accumulate(sink_at(sink, p + "ffn.w1"), lt.ln2_out.transpose() * dpre);
        accumulate_row(sink_at(sink, p + "ffn.b1"), dpre.colwise().sum());
        if (lowest > 1 + 2 * l && !sink_at(sink, p + "ln2.gain") && !sink_at(sink, p + "ln2.bias")) {
            break;
        }
        dh.noalias() = dpre * cast_mat<S>(wmat(m, p + "ffn.w1")).transpose();
        layer_norm_backward(dh, lt.ln2_xhat, lt.ln2_rstd, cast_vec<S>(wvec(m, p + "ln2.gain")), sink_at(sink, p + "ln2.gain"),
                            sink_at(sink, p + "ln2.bias"), tmp);
        dx += tmp;
        if (lowest > 1 + 2 * l) {
            break;
        }

        // attention block: x += attn(ln1(x)) Wo
        accumulate(sink_at(sink, p + "attn.wo"), lt.attn_cat.transpose() * dx);
        dcat.noalias() = dx * cast_mat<S>(wmat(m, p + "attn.wo")).transpose();
        for (Eigen::Index hh = 0; hh < H; ++hh) {
            const Mat<S> & P = lt.probs[static_cast<std::size_t>(hh)];
            const auto dout = dcat.middleCols(hh * hd, hd);
            Mat<S> dP = dout * lt.v.middleCols(hh * hd, hd).transpose();
            dv.middleCols(hh * hd, hd).noalias() = P.transpose() * dout;
            // softmax backward, row-wise
            const Eigen::Matrix<S, Eigen::Dynamic, 1> rowdot = (dP.cwiseProduct(P)).rowwise().sum();
            Mat<S> dS = P.cwiseProduct(dP.colwise() - rowdot) * scale;
            dq.middleCols(hh * hd, hd).noalias() = dS * lt.k.middleCols(hh * hd, hd);
            dk.middleCols(hh * hd, hd).noalias() = dS.transpose() * lt.q.middleCols(hh * hd, hd);
        }
        accumulate(sink_at(sink, p + "attn.wq"), lt.ln1_out.transpose() * dq);
        accumulate(sink_at(sink, p + "attn.wk"), lt.ln1_out.transpose() * dk);
        accumulate(sink_at(sink, p + "attn.wv"), lt.ln1_out.transpose() * dv);
        if (lowest > 2 * l && !sink_at(sink, p + "ln1.gain") && !sink_at(sink, p + "ln1.bias")) {
            break;
        }
        dh.noalias() = dq * cast_mat<S>(wmat(m, p + "attn.wq")).transpose();
        dh.noalias() += dk * cast_mat<S>(wmat(m, p + "attn.wk")).transpose();
        dh.noalias() += dv * cast_mat<S>(wmat(m, p + "attn.wv")).transpose();
        layer_norm_backward(dh, lt.ln1_xhat, lt.ln1_rstd, cast_vec<S>(wvec(m, p + "ln1.gain")), sink_at(sink, p + "ln1.gain"),
                            sink_at(sink, p + "ln1.bias"), tmp);
        dx += tmp;
    }

    if (lowest == 0) {
        Tensor * dtok = sink_at(sink, "tok_emb");
        Tensor * dpos = sink_at(sink, "pos_emb");
        for (Eigen::Index t = 0; t < T; ++t) {
            if (dtok) {
                Eigen::Map<RowVec<float>>(dtok->ptr() + tr.tokens[static_cast<std::size_t>(t)] * D, D) += dx.row(t).template cast<float>();
            }
            if (dpos) {
                Eigen::Map<RowVec<float>>(dpos->ptr() + t * D, D) += dx.row(t).template cast<float>();
            }
        }
    }
}

template ForwardTrace<float> forward_trace<float>(const TinyLm &, std::span<const int>);
template ForwardTrace<double> forward_trace<double>(const TinyLm &, std::span<const int>);
template double target_nll<float>(const ForwardTrace<float> &, std::size_t, std::span<const int>, Mat<float> *);
template double target_nll<double>(const ForwardTrace<double> &, std::size_t, std::span<const int>, Mat<double> *);
template void backward<float>(const TinyLm &, const ForwardTrace<float> &, const Mat<float> &, const GradSink &);
template void backward<double>(const TinyLm &, const ForwardTrace<double> &, const Mat<double> &, const GradSink &);

}  // namespace kernels

}  // namespace kedit
