#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fusenas/errors.hpp"
#include "fusenas/graph.hpp"
#include "fusenas/tensor.hpp"

namespace fusenas {

// Ordered, named tensor registry. Insertion order is the canonical order for
// optimizer updates and checkpoints, so runs stay reproducible.
struct ParamSet {
    std::vector<std::pair<std::string, Tensor>> items;
    std::unordered_map<std::string, size_t> index;

    void add(const std::string& name, Tensor t) {
        if (index.count(name)) throw ConfigError("duplicate parameter name: " + name);
        index.emplace(name, items.size());
        items.emplace_back(name, std::move(t));
    }

    bool has(const std::string& name) const { return index.count(name) > 0; }

    Tensor& at(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("unknown parameter: " + name);
        return items[it->second].second;
    }

    const Tensor& at(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("unknown parameter: " + name);
        return items[it->second].second;
    }

    size_t size() const { return items.size(); }
};

// Binds named parameters into a graph as trainable leaves, once each.
class Binder {
public:
    explicit Binder(Graph& g) : g_(&g) {}

    Graph::NodeId bind(const std::string& name, const Tensor& t) {
        auto it = nodes_.find(name);
        if (it != nodes_.end()) return it->second;
        const Graph::NodeId id = g_->leaf(t, true);
        nodes_.emplace(name, id);
        return id;
    }

    Graph::NodeId bind(const ParamSet& params, const std::string& name) {
        return bind(name, params.at(name));
    }

    // Registers an existing node under a name (e.g. a leaf created elsewhere).
    void preset(const std::string& name, Graph::NodeId id) {
        if (!nodes_.emplace(name, id).second) throw ConfigError("parameter already bound: " + name);
    }

    Graph::NodeId node(const std::string& name) const {
        auto it = nodes_.find(name);
        if (it == nodes_.end()) throw ConfigError("parameter not bound: " + name);
        return it->second;
    }

    bool bound(const std::string& name) const { return nodes_.count(name) > 0; }

private:
    Graph* g_;
    std::unordered_map<std::string, Graph::NodeId> nodes_;
};

}  // namespace fusenas
