#pragma once

// Internal helpers over boost::property_tree for the model and problem XML formats.

#include <boost/property_tree/ptree.hpp>

#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lang2manip/errors.hpp"
#include "lang2manip/geometry.hpp"

namespace lang2manip::xml {

using boost::property_tree::ptree;

/// Parses a document and returns its single root element. Throws Error(malformed_xml).
std::pair<std::string, ptree> parse_document(std::string_view text);

class Element {
 public:
  Element(const ptree& tree, std::string path) : tree_(&tree), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  std::string text() const;

  std::optional<std::string> attribute(const char* name) const;
  std::string required(const char* name) const;
  double number(const char* name) const;
  std::optional<double> optional_number(const char* name) const;
  bool boolean(const char* name) const;

  /// Rejects attributes outside `allowed`.
  void only_attributes(std::initializer_list<std::string_view> allowed) const;
  /// Child elements in document order; unknown tags are rejected.
  std::vector<std::pair<std::string, Element>> children(
      std::initializer_list<std::string_view> allowed) const;

  /// Pose from x/y/z and qx/qy/qz/qw (or roll/pitch/yaw) attributes; all optional.
  Pose pose(std::vector<std::string>* warnings) const;

  [[noreturn]] void fail(Errc code, const std::string& message) const;

 private:
  const ptree* tree_;
  std::string path_;
};

double parse_double(std::string_view text, const std::string& where);
std::vector<double> parse_numbers(std::string_view text, const std::string& where);

/// Shortest decimal form that round-trips.
std::string format_number(double v);
std::string escape(std::string_view text);
std::string pose_attributes(const Pose& pose);

}  // namespace lang2manip::xml
