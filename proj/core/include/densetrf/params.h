#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "densetrf/tensor.h"

namespace dtrf {

// Named, ordered collection of parameter tensors. Order is insertion order
// and is part of the merge-compatibility contract.
class ParameterSet {
  public:
    void add(const std::string& name, Tensor t);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    Tensor* find(const std::string& name);

    const std::vector<std::string>& names() const { return names_; }
    size_t count() const { return names_.size(); }
    bool empty() const { return names_.empty(); }

    // Merge compatibility: identical names, order, and shapes.
    bool compatible_with(const ParameterSet& o, std::string* why = nullptr) const;

    int64_t total_elements() const;
    bool all_finite() const;

  private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
    std::unordered_map<std::string, size_t> index_;
};

// Euclidean distance between two compatible sets, over all elements.
double param_distance(const ParameterSet& a, const ParameterSet& b);

} // namespace dtrf
