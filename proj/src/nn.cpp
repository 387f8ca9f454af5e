#include "gazevit/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "gazevit/errors.hpp"

namespace gazevit::nn {

Param& ParamStore::add(std::string name, Mat init) {
    if (contains(name)) throw InvalidInput("duplicate parameter '" + name + "'");
    params_.push_back(std::make_unique<Param>(Param{std::move(name), std::move(init), {}}));
    return *params_.back();
}

bool ParamStore::contains(const std::string& name) const {
    for (const auto& p : params_)
        if (p->name == name) return true;
    return false;
}

Param& ParamStore::get(const std::string& name) {
    for (auto& p : params_)
        if (p->name == name) return *p;
    throw InvalidInput("no parameter named '" + name + "'");
}

const Param& ParamStore::get(const std::string& name) const {
    return const_cast<ParamStore*>(this)->get(name);
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p->grad = Mat::Zero(p->value.rows(), p->value.cols());
}

void ParamStore::assign_values(const ParamStore& other) {
    if (other.size() != size()) throw InvalidInput("parameter stores differ in size");
    for (auto& p : params_) {
        const Param& src = other.get(p->name);
        if (src.value.rows() != p->value.rows() || src.value.cols() != p->value.cols())
            throw InvalidInput("shape mismatch for parameter '" + p->name + "'");
        p->value = src.value;
    }
}

Mat trunc_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        double v;
        do v = dist(rng);
        while (std::abs(v) > 2.0);
        m.data()[i] = v * stddev;
    }
    return m;
}

Mat standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

Linear::Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng, bool zero_init)
    : weight(&store.add(name + ".weight", zero_init ? Mat(Mat::Zero(in, out)) : trunc_normal(in, out, 0.02, rng))),
      bias(&store.add(name + ".bias", Mat::Zero(1, out))) {}

Var Linear::operator()(Tape& tape, Var x) const {
    return ad::add_row(ad::matmul(x, tape.param(*weight)), tape.param(*bias));
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int dim)
    : gamma(&store.add(name + ".gamma", Mat::Ones(1, dim))),
      beta(&store.add(name + ".beta", Mat::Zero(1, dim))) {}

Var LayerNorm::operator()(Tape& tape, Var x) const {
    return ad::add_row(ad::mul_row(ad::layer_norm(x), tape.param(*gamma)), tape.param(*beta));
}

Mlp::Mlp(ParamStore& store, const std::string& name, int dim, int hidden, Rng& rng)
    : fc1(store, name + ".fc1", dim, hidden, rng), fc2(store, name + ".fc2", hidden, dim, rng) {}

Var Mlp::operator()(Tape& tape, Var x) const { return fc2(tape, ad::gelu(fc1(tape, x))); }

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name, int dim, int heads_,
                                       Rng& rng)
    : q(store, name + ".q", dim, dim, rng),
      k(store, name + ".k", dim, dim, rng),
      v(store, name + ".v", dim, dim, rng),
      o(store, name + ".o", dim, dim, rng),
      heads(heads_) {
    if (dim % heads != 0) throw InvalidInput("attention width must be divisible by the head count");
}

Var MultiHeadAttention::operator()(Tape& tape, Var queries, Var keys, const Segments& qs,
                                   const Segments& ks) const {
    Var att = ad::attention(q(tape, queries), k(tape, keys), v(tape, keys), heads, qs, ks);
    return o(tape, att);
}

std::vector<int> segment_row_index(const Segments& segments) {
    std::vector<int> index(static_cast<std::size_t>(segments.total()));
    for (int s = 0; s < segments.count(); ++s)
        for (int r = segments.begin(s); r < segments.begin(s) + segments.length(s); ++r) index[r] = s;
    return index;
}

Adam::Adam(const ParamStore& store) : Adam(store, Options{}) {}

Adam::Adam(const ParamStore& store, Options opts) : opts_(opts) {
    for (std::size_t i = 0; i < store.size(); ++i) {
        m_.push_back(Mat::Zero(store[i].value.rows(), store[i].value.cols()));
        v_.push_back(Mat::Zero(store[i].value.rows(), store[i].value.cols()));
    }
}

void Adam::step(ParamStore& store, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < store.size(); ++i) {
        Param& p = store[i];
        if (p.grad.size() == 0) continue;
        m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * p.grad;
        v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * p.grad.cwiseProduct(p.grad);
        if (opts_.weight_decay > 0) p.value *= 1.0 - lr * opts_.weight_decay;
        p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + opts_.eps);
    }
}

double clip_grad_norm(ParamStore& store, double max_norm) {
    double sq = 0.0;
    for (std::size_t i = 0; i < store.size(); ++i)
        if (store[i].grad.size()) sq += store[i].grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (std::size_t i = 0; i < store.size(); ++i)
            if (store[i].grad.size()) store[i].grad *= s;
    }
    return norm;
}

Ema::Ema(const ParamStore& store, double decay) : decay_(decay) {
    if (!(decay >= 0.0 && decay < 1.0)) throw InvalidInput("EMA decay must lie in [0,1)");
    for (std::size_t i = 0; i < store.size(); ++i) shadow_.push_back(store[i].value);
}

void Ema::update(const ParamStore& store) {
    for (std::size_t i = 0; i < store.size(); ++i)
        shadow_[i] = decay_ * shadow_[i] + (1.0 - decay_) * store[i].value;
}

void Ema::copy_to(ParamStore& store) const {
    for (std::size_t i = 0; i < store.size(); ++i) store[i].value = shadow_[i];
}

double cosine_lr(double base, long step, long total) {
    if (total <= 0) return base;
    const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
    return base * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

namespace {

constexpr char kMagic[8] = {'G', 'Z', 'V', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    unsigned char buf[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw IoError("checkpoint truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, kVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(store.size()));
    for (std::size_t i = 0; i < store.size(); ++i) {
        const Param& p = store[i];
        put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.rows()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.cols()));
        for (Eigen::Index j = 0; j < p.value.size(); ++j) put<double>(os, p.value.data()[j]);
    }
    if (!os) throw IoError("failed writing " + path.string());
}

void load_checkpoint(ParamStore& store, const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a checkpoint: " + path.string());
    if (get<std::uint32_t>(is) != kVersion) throw IoError("unsupported checkpoint version");
    const auto count = get<std::uint32_t>(is);
    if (count != store.size()) throw IoError("checkpoint tensor count does not match the model");
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = get<std::uint32_t>(is);
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw IoError("checkpoint truncated");
        const auto rows = get<std::uint32_t>(is);
        const auto cols = get<std::uint32_t>(is);
        if (!store.contains(name)) throw IoError("checkpoint has unknown tensor '" + name + "'");
        Param& p = store.get(name);
        if (p.value.rows() != rows || p.value.cols() != cols)
            throw IoError("checkpoint shape mismatch for '" + name + "'");
        for (Eigen::Index j = 0; j < p.value.size(); ++j) p.value.data()[j] = get<double>(is);
    }
}

}  // namespace gazevit::nn
