#pragma once

// Versioned JSON persistence for parameter tensors.

#include <string>

#include "json.hpp"
#include "plcbinx/learn/tensor.hpp"

namespace plcbinx::learn {

inline nlohmann::ordered_json params_to_json(const ParamList& ps) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto* p : ps) {
    nlohmann::ordered_json t;
    t["shape"] = {p->value.rows, p->value.cols};
    t["data"] = p->value.data;
    j[p->name] = std::move(t);
  }
  return j;
}

inline void params_from_json(const nlohmann::ordered_json& j, const ParamList& ps, const std::string& path) {
  for (auto* p : ps) {
    const std::string at = path + "/" + p->name;
    if (!j.is_object() || !j.contains(p->name)) throw Error(ErrorKind::SchemaViolation, at + ": missing tensor");
    const auto& t = j.at(p->name);
    try {
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2 || shape[0] != p->value.rows || shape[1] != p->value.cols)
        throw Error(ErrorKind::SchemaViolation, at + "/shape: expected [" + std::to_string(p->value.rows) + "," +
                                                    std::to_string(p->value.cols) + "]");
      auto data = t.at("data").get<std::vector<double>>();
      if (data.size() != p->value.size()) throw Error(ErrorKind::SchemaViolation, at + "/data: wrong length");
      p->value.data = std::move(data);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::SchemaViolation, at + ": " + e.what());
    }
  }
}

}  // namespace plcbinx::learn
