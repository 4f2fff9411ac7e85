#include "densetrf/params.h"

#include <cmath>

#include "densetrf/errors.h"

namespace dtrf {

void ParameterSet::add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw Error("duplicate parameter name: " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    tensors_.push_back(std::move(t));
}

Tensor& ParameterSet::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("no such parameter: " + name);
    return tensors_[it->second];
}

const Tensor& ParameterSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("no such parameter: " + name);
    return tensors_[it->second];
}

Tensor* ParameterSet::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &tensors_[it->second];
}

bool ParameterSet::compatible_with(const ParameterSet& o, std::string* why) const {
    if (names_.size() != o.names_.size()) {
        if (why) *why = "entry count " + std::to_string(names_.size()) + " vs " + std::to_string(o.names_.size());
        return false;
    }
    for (size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] != o.names_[i]) {
            if (why) *why = "name/order mismatch at entry " + std::to_string(i) + ": " + names_[i] + " vs " + o.names_[i];
            return false;
        }
        if (!tensors_[i].same_shape(o.tensors_[i])) {
            if (why) *why = "shape mismatch for " + names_[i] + ": " + tensors_[i].shape_str() + " vs " + o.tensors_[i].shape_str();
            return false;
        }
    }
    return true;
}

int64_t ParameterSet::total_elements() const {
    int64_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
}

bool ParameterSet::all_finite() const {
    for (const auto& t : tensors_) {
        if (!t.all_finite()) return false;
    }
    return true;
}

double param_distance(const ParameterSet& a, const ParameterSet& b) {
    std::string why;
    if (!a.compatible_with(b, &why)) throw IncompatibleParamsError("param_distance: " + why);
    double s = 0.0;
    for (const auto& name : a.names()) {
        const Tensor& ta = a.at(name);
        const Tensor& tb = b.at(name);
        for (int64_t i = 0; i < ta.size(); ++i) {
            double d = ta[i] - tb[i];
            s += d * d;
        }
    }
    return std::sqrt(s);
}

} // namespace dtrf
