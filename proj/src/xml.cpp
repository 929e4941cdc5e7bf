#include "xml.hpp"

#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace lang2manip::xml {

namespace {

const ptree* attributes_of(const ptree& tree) {
  const auto it = tree.find("<xmlattr>");
  return it == tree.not_found() ? nullptr : &it->second;
}

}  // namespace

std::pair<std::string, ptree> parse_document(std::string_view text) {
  ptree doc;
  std::istringstream in{std::string(text)};
  try {
    boost::property_tree::read_xml(in, doc, boost::property_tree::xml_parser::no_comments);
  } catch (const boost::property_tree::xml_parser_error& e) {
    throw Error(Errc::malformed_xml,
                e.message() + " (line " + std::to_string(e.line()) + ")", "document");
  }
  std::vector<std::pair<std::string, ptree>> roots;
  for (auto& [tag, child] : doc) {
    if (tag == "<xmlcomment>") continue;
    roots.emplace_back(tag, child);
  }
  if (roots.size() != 1) {
    throw Error(Errc::malformed_xml, "expected exactly one root element", "document");
  }
  return std::move(roots.front());
}

std::string Element::text() const { return tree_->data(); }

std::optional<std::string> Element::attribute(const char* name) const {
  const ptree* attrs = attributes_of(*tree_);
  if (!attrs) return std::nullopt;
  const auto it = attrs->find(name);
  if (it == attrs->not_found()) return std::nullopt;
  return it->second.data();
}

std::string Element::required(const char* name) const {
  auto value = attribute(name);
  if (!value) {
    throw Error(Errc::missing_attribute, std::string("missing attribute '") + name + "'", path_);
  }
  return *value;
}

double Element::number(const char* name) const {
  return parse_double(required(name), path_ + "@" + name);
}

std::optional<double> Element::optional_number(const char* name) const {
  auto value = attribute(name);
  if (!value) return std::nullopt;
  return parse_double(*value, path_ + "@" + name);
}

bool Element::boolean(const char* name) const {
  const std::string value = required(name);
  if (value == "true") return true;
  if (value == "false") return false;
  throw Error(Errc::invalid_value, "expected true|false, got '" + value + "'",
              path_ + "@" + name);
}

void Element::only_attributes(std::initializer_list<std::string_view> allowed) const {
  const ptree* attrs = attributes_of(*tree_);
  if (!attrs) return;
  for (const auto& [name, _] : *attrs) {
    if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
      throw Error(Errc::invalid_element, "unexpected attribute '" + name + "'", path_);
    }
  }
}

std::vector<std::pair<std::string, Element>> Element::children(
    std::initializer_list<std::string_view> allowed) const {
  std::vector<std::pair<std::string, Element>> out;
  std::map<std::string, int> counts;
  for (const auto& [tag, child] : *tree_) {
    if (tag == "<xmlattr>" || tag == "<xmlcomment>") continue;
    if (std::find(allowed.begin(), allowed.end(), tag) == allowed.end()) {
      throw Error(Errc::invalid_element, "unexpected element <" + tag + ">", path_);
    }
    const int n = counts[tag]++;
    out.emplace_back(tag, Element(child, path_ + "/" + tag + "[" + std::to_string(n) + "]"));
  }
  return out;
}

Pose Element::pose(std::vector<std::string>* warnings) const {
  const bool has_quat = attribute("qx") || attribute("qy") || attribute("qz") || attribute("qw");
  const bool has_rpy = attribute("roll") || attribute("pitch") || attribute("yaw");
  if (has_quat && has_rpy) fail(Errc::invalid_value, "both quaternion and roll/pitch/yaw given");
  const double x = optional_number("x").value_or(0.0);
  const double y = optional_number("y").value_or(0.0);
  const double z = optional_number("z").value_or(0.0);
  if (has_rpy) {
    const Quat q = axis_angle(Vec3::UnitZ(), optional_number("yaw").value_or(0.0)) *
                   axis_angle(Vec3::UnitY(), optional_number("pitch").value_or(0.0)) *
                   axis_angle(Vec3::UnitX(), optional_number("roll").value_or(0.0));
    return Pose{Vec3(x, y, z), q.normalized()};
  }
  bool normalized = false;
  try {
    Pose p = Pose::from_components(x, y, z, optional_number("qx").value_or(0.0),
                                   optional_number("qy").value_or(0.0),
                                   optional_number("qz").value_or(0.0),
                                   optional_number("qw").value_or(has_quat ? 0.0 : 1.0),
                                   &normalized);
    if (normalized && warnings) warnings->push_back(path_ + ": quaternion normalized");
    return p;
  } catch (const Error& e) {
    fail(e.code(), e.what());
  }
}

void Element::fail(Errc code, const std::string& message) const {
  throw Error(code, message, path_);
}

double parse_double(std::string_view text, const std::string& where) {
  const auto first = text.find_first_not_of(" \t\r\n");
  const auto last = text.find_last_not_of(" \t\r\n");
  if (first == std::string_view::npos) throw Error(Errc::invalid_value, "empty number", where);
  text = text.substr(first, last - first + 1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    throw Error(Errc::invalid_value, "not a finite number: '" + std::string(text) + "'", where);
  }
  return value;
}

std::vector<double> parse_numbers(std::string_view text, const std::string& where) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    out.push_back(parse_double(text.substr(i, j - i), where));
    i = j;
  }
  return out;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string pose_attributes(const Pose& pose) {
  const auto c = pose.components();
  static constexpr const char* names[] = {"x", "y", "z", "qx", "qy", "qz", "qw"};
  std::string out;
  for (int i = 0; i < 7; ++i) {
    if (i) out += ' ';
    out += names[i];
    out += "=\"" + format_number(c[static_cast<std::size_t>(i)]) + "\"";
  }
  return out;
}

}  // namespace lang2manip::xml
