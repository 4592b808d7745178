#include "schema_check.hpp"

#include <cmath>

namespace leakmap::detail {

namespace {

using nlohmann::json;

bool has_type(const json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  if (t == "number") return v.is_number();
  if (t == "integer") {
    if (v.is_number_integer()) return true;
    return v.is_number_float() && std::floor(v.get<double>()) == v.get<double>();
  }
  return false;
}

const json& resolve(const json& root, const json& node) {
  if (!node.contains("$ref")) return node;
  const std::string ref = node["$ref"].get<std::string>();
  if (ref.rfind("#/", 0) != 0) throw std::runtime_error("unsupported $ref " + ref);
  return root.at(json::json_pointer(ref.substr(1)));
}

void check(const json& root, const json& node, const json& v, const std::string& path, std::vector<std::string>& errs) {
  const json& s = resolve(root, node);
  const std::string where = path.empty() ? "/" : path;
  if (s.contains("type")) {
    bool ok = false;
    if (s["type"].is_array()) {
      for (const auto& t : s["type"]) ok = ok || has_type(v, t.get<std::string>());
    } else {
      ok = has_type(v, s["type"].get<std::string>());
    }
    if (!ok) {
      errs.push_back(where + ": expected " + s["type"].dump() + ", got " + v.dump());
      return;
    }
  }
  if (s.contains("enum")) {
    bool found = false;
    for (const auto& e : s["enum"]) found = found || e == v;
    if (!found) errs.push_back(where + ": " + v.dump() + " is not one of " + s["enum"].dump());
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (s.contains("minimum") && x < s["minimum"].get<double>())
      errs.push_back(where + ": " + v.dump() + " is below the minimum " + s["minimum"].dump());
    if (s.contains("maximum") && x > s["maximum"].get<double>())
      errs.push_back(where + ": " + v.dump() + " is above the maximum " + s["maximum"].dump());
    if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>())
      errs.push_back(where + ": " + v.dump() + " must exceed " + s["exclusiveMinimum"].dump());
    if (s.contains("exclusiveMaximum") && x >= s["exclusiveMaximum"].get<double>())
      errs.push_back(where + ": " + v.dump() + " must be below " + s["exclusiveMaximum"].dump());
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
      errs.push_back(where + ": needs at least " + s["minItems"].dump() + " items");
    if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>())
      errs.push_back(where + ": allows at most " + s["maxItems"].dump() + " items");
    if (s.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i) check(root, s["items"], v[i], path + "/" + std::to_string(i), errs);
  }
  if (v.is_object()) {
    if (s.contains("required"))
      for (const auto& r : s["required"])
        if (!v.contains(r.get<std::string>())) errs.push_back(where + ": missing required key " + r.dump());
    const json empty = json::object();
    const json& props = s.contains("properties") ? s["properties"] : empty;
    const bool closed = s.contains("additionalProperties") && s["additionalProperties"] == false;
    for (const auto& [key, value] : v.items()) {
      if (props.contains(key)) {
        check(root, props[key], value, path + "/" + key, errs);
      } else if (closed) {
        errs.push_back(where + ": unknown key \"" + key + "\"");
      }
    }
  }
}

}  // namespace

std::vector<std::string> validate_schema(const nlohmann::json& schema, const nlohmann::json& doc) {
  std::vector<std::string> errs;
  check(schema, schema, doc, "", errs);
  return errs;
}

}  // namespace leakmap::detail
