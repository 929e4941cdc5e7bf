#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lang2manip {

/// Error classes raised by the scene, service and parsing layers.
enum class Errc {
  malformed_xml,
  invalid_element,
  missing_attribute,
  invalid_value,
  duplicate_name,
  invalid_chain,
  unresolved_path,
  absolute_path,
  arity_mismatch,
  unknown_planner,
  invalid_parameter,
  missing_directory,
  no_problem_file,
  ambiguous_problem,
  unknown_object,
  not_graspable,
  already_attached,
  not_attached,
  no_gripper,
  limits_violated,
  in_collision,
  planner_not_set,
  query_not_set,
  no_path,
  unknown_session,
  invalid_request,
  transport,
};

std::string_view to_string(Errc code);

/// Structured failure; `where` carries an element path or field name when one applies.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::string where = {})
      : std::runtime_error(where.empty() ? message : where + ": " + message),
        code_(code),
        where_(std::move(where)) {}

  Errc code() const noexcept { return code_; }
  const std::string& where() const noexcept { return where_; }

 private:
  Errc code_;
  std::string where_;
};

/// Raised when an LLM endpoint cannot be reached or answers with a non-success status.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lang2manip
