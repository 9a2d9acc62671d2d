#include "conseg/params.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace conseg::ad {

namespace {

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& os, double d) {
    uint64_t v;
    static_assert(sizeof(v) == sizeof(d));
    std::memcpy(&v, &d, 8);
    put_u64(os, v);
}

double get_f64(std::istream& is) {
    uint64_t v = get_u64(is);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

constexpr char kMagic[8] = {'C', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};

}  // namespace

Parameter& ParameterStore::create(const std::string& name, Shape shape) {
    if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<Parameter>(name, std::move(shape)));
    index_[name] = params_.size() - 1;
    return *params_.back();
}

Parameter& ParameterStore::create_normal(const std::string& name, Shape shape, Rng& rng,
                                         double stddev) {
    Parameter& p = create(name, std::move(shape));
    for (double& v : p.value) v = rng.normal(0.0, stddev);
    return p;
}

Parameter& ParameterStore::create_xavier(const std::string& name, Shape shape, Rng& rng) {
    Parameter& p = create(name, std::move(shape));
    int64_t fan_in = 1, fan_out = 1;
    if (p.shape.size() >= 2) {
        fan_in = p.shape[0];
        fan_out = p.shape[1];
        for (size_t i = 2; i < p.shape.size(); ++i) {
            fan_in *= p.shape[i];
            fan_out *= p.shape[i];
        }
    } else if (p.shape.size() == 1) {
        fan_in = fan_out = p.shape[0];
    }
    double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : p.value) v = rng.normal(0.0, stddev);
    return p;
}

Parameter* ParameterStore::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParameterStore::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParameterStore::at(const std::string& name) {
    Parameter* p = find(name);
    if (!p) throw ContractError("unknown parameter: " + name);
    return *p;
}

std::vector<Parameter*> ParameterStore::all() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

int64_t ParameterStore::total_size() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

std::vector<std::vector<double>> ParameterStore::snapshot_values() const {
    std::vector<std::vector<double>> snap;
    snap.reserve(params_.size());
    for (const auto& p : params_) snap.push_back(p->value);
    return snap;
}

void ParameterStore::restore_values(const std::vector<std::vector<double>>& snap) {
    if (snap.size() != params_.size()) throw ContractError("snapshot/store size mismatch");
    for (size_t i = 0; i < snap.size(); ++i) {
        if (snap[i].size() != params_[i]->value.size())
            throw ContractError("snapshot shape mismatch for " + params_[i]->name);
        params_[i]->value = snap[i];
    }
}

void ParameterStore::save(const std::string& path, const std::string& manifest_json) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ContractError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 8);
    put_u64(os, 1);  // version
    put_u64(os, manifest_json.size());
    os.write(manifest_json.data(), static_cast<std::streamsize>(manifest_json.size()));
    put_u64(os, params_.size());
    for (const auto& p : params_) {
        put_u64(os, p->name.size());
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_u64(os, p->shape.size());
        for (int d : p->shape) put_u64(os, static_cast<uint64_t>(d));
        for (double v : p->value) put_f64(os, v);
    }
    if (!os) throw ContractError("checkpoint write failed: " + path);
}

std::string ParameterStore::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ContractError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw ContractError("not a checkpoint file: " + path);
    uint64_t version = get_u64(is);
    if (version != 1) throw ContractError("unsupported checkpoint version");
    uint64_t mlen = get_u64(is);
    std::string manifest(mlen, '\0');
    is.read(manifest.data(), static_cast<std::streamsize>(mlen));
    uint64_t n = get_u64(is);
    for (uint64_t i = 0; i < n; ++i) {
        uint64_t nlen = get_u64(is);
        std::string name(nlen, '\0');
        is.read(name.data(), static_cast<std::streamsize>(nlen));
        uint64_t ndim = get_u64(is);
        Shape shape(ndim);
        for (uint64_t d = 0; d < ndim; ++d) shape[d] = static_cast<int>(get_u64(is));
        Parameter* p = find(name);
        if (!p) throw ContractError("checkpoint has unknown parameter: " + name);
        if (p->shape != shape)
            throw ContractError("checkpoint shape mismatch for " + name + ": expected " +
                                shape_str(p->shape) + ", got " + shape_str(shape));
        for (double& v : p->value) v = get_f64(is);
    }
    if (!is) throw ContractError("truncated checkpoint: " + path);
    return manifest;
}

std::string ParameterStore::read_manifest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ContractError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw ContractError("not a checkpoint file: " + path);
    get_u64(is);  // version
    uint64_t mlen = get_u64(is);
    std::string manifest(mlen, '\0');
    is.read(manifest.data(), static_cast<std::streamsize>(mlen));
    if (!is) throw ContractError("truncated checkpoint: " + path);
    return manifest;
}

void Optimizer::step(std::vector<Parameter*> params) {
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (Parameter* p : params) {
        for (size_t i = 0; i < p->value.size(); ++i) {
            double g = p->grad[i];
            if (!std::isfinite(g))
                throw TrainingError("non-finite gradient in parameter " + p->name);
            p->m[i] = cfg_.beta1 * p->m[i] + (1.0 - cfg_.beta1) * g;
            p->v[i] = cfg_.beta2 * p->v[i] + (1.0 - cfg_.beta2) * g * g;
            double mhat = p->m[i] / bc1;
            double vhat = p->v[i] / bc2;
            p->value[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                      cfg_.weight_decay * p->value[i]);
        }
    }
}

}  // namespace conseg::ad
