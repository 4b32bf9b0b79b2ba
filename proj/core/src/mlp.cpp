#include "njord/mlp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace njord::diffcore {

Tensor& ParamSet::create(const std::string& name, int rows, int cols) {
    auto [it, inserted] = params_.emplace(name, Tensor::zeros(rows, cols));
    if (!inserted) {
        throw std::invalid_argument("parameter already exists: " + name);
    }
    return it->second;
}

Tensor& ParamSet::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
}

bool ParamSet::contains(const std::string& name) const {
    return params_.count(name) > 0;
}

size_t ParamSet::count_scalars() const {
    size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
}

void ParamSet::save(const std::string& path,
                    const std::map<std::string, std::string>& meta) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "magic NJC1\n";
    out << "version 1\n";
    for (const auto& [k, v] : meta) out << "meta " << k << " " << v << "\n";
    for (const auto& [name, t] : params_) {
        out << "param " << name << " " << t.rows << " " << t.cols << "\n";
    }
    out << "end_header\n";
    for (const auto& [name, t] : params_) {
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("write failure on " + path);
}

ParamSet ParamSet::load(const std::string& path,
                        std::map<std::string, std::string>* meta_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "magic NJC1") {
        throw std::runtime_error("not a checkpoint file: " + path);
    }
    if (!std::getline(in, line) || line != "version 1") {
        throw std::runtime_error("unsupported checkpoint version in " + path);
    }
    ParamSet ps;
    std::vector<std::string> order;
    while (std::getline(in, line)) {
        if (line == "end_header") break;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "meta") {
            std::string k, v;
            ss >> k;
            std::getline(ss, v);
            if (!v.empty() && v[0] == ' ') v.erase(0, 1);
            if (meta_out) (*meta_out)[k] = v;
        } else if (tag == "param") {
            std::string name;
            int r = 0, c = 0;
            ss >> name >> r >> c;
            if (!ss || r < 0 || c < 0) {
                throw std::runtime_error("bad param line in " + path + ": " + line);
            }
            ps.create(name, r, c);
            order.push_back(name);
        } else {
            throw std::runtime_error("unexpected header line in " + path + ": " + line);
        }
    }
    for (const std::string& name : order) {
        Tensor& t = ps.at(name);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) throw std::runtime_error("truncated checkpoint payload in " + path);
    }
    return ps;
}

Var Binder::operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return Var{graph_, it->second};
    Var v = graph_->leaf(params_->at(name));
    bound_[name] = v.id;
    return v;
}

std::map<std::string, Tensor> Binder::collect_grads() const {
    std::map<std::string, Tensor> grads;
    for (const auto& [name, id] : bound_) {
        const Tensor& g = graph_->grad(id);
        const Tensor& v = graph_->value(id);
        if (g.rows == v.rows && g.cols == v.cols) {
            grads[name] = g;
        } else {
            grads[name] = Tensor::zeros(v.rows, v.cols);
        }
    }
    return grads;
}

void Mlp::init(ParamSet& params, CounterRng& rng) const {
    if (spec_.in <= 0 || spec_.out <= 0) {
        throw std::invalid_argument("MLP " + prefix_ + " has undeclared dims");
    }
    int in = spec_.in;
    for (int l = 0; l < spec_.n_hidden; ++l) {
        Tensor& w = params.create(prefix_ + ".w" + std::to_string(l), in, spec_.hidden);
        params.create(prefix_ + ".b" + std::to_string(l), 1, spec_.hidden);
        const double s = std::sqrt(2.0 / in);
        for (double& v : w.data) v = s * rng.normal();
        in = spec_.hidden;
    }
    const int lo = spec_.n_hidden;
    Tensor& w = params.create(prefix_ + ".w" + std::to_string(lo), in, spec_.out);
    params.create(prefix_ + ".b" + std::to_string(lo), 1, spec_.out);
    if (!spec_.zero_init) {
        const double s = std::sqrt(2.0 / in);
        for (double& v : w.data) v = s * rng.normal();
    }
    if (spec_.layer_norm) {
        Tensor& g = params.create(prefix_ + ".ln_g", 1, spec_.out);
        params.create(prefix_ + ".ln_b", 1, spec_.out);
        g.fill(1.0);
    }
}

Var Mlp::apply(Binder& bind, Var x) const {
    if (x.cols() != spec_.in) {
        throw std::invalid_argument("MLP " + prefix_ + " expects input width " +
                                    std::to_string(spec_.in) + ", got " +
                                    std::to_string(x.cols()));
    }
    Var h = x;
    for (int l = 0; l < spec_.n_hidden; ++l) {
        const std::string ls = std::to_string(l);
        h = silu(add_rowvec(matmul(h, bind(prefix_ + ".w" + ls)),
                            bind(prefix_ + ".b" + ls)));
    }
    const std::string ls = std::to_string(spec_.n_hidden);
    h = add_rowvec(matmul(h, bind(prefix_ + ".w" + ls)), bind(prefix_ + ".b" + ls));
    if (spec_.layer_norm) {
        h = layer_norm(h, bind(prefix_ + ".ln_g"), bind(prefix_ + ".ln_b"));
    }
    return h;
}

}  // namespace njord::diffcore
