#include "lang2manip/errors.hpp"

namespace lang2manip {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::malformed_xml: return "malformed_xml";
    case Errc::invalid_element: return "invalid_element";
    case Errc::missing_attribute: return "missing_attribute";
    case Errc::invalid_value: return "invalid_value";
    case Errc::duplicate_name: return "duplicate_name";
    case Errc::invalid_chain: return "invalid_chain";
    case Errc::unresolved_path: return "unresolved_path";
    case Errc::absolute_path: return "absolute_path";
    case Errc::arity_mismatch: return "arity_mismatch";
    case Errc::unknown_planner: return "unknown_planner";
    case Errc::invalid_parameter: return "invalid_parameter";
    case Errc::missing_directory: return "missing_directory";
    case Errc::no_problem_file: return "no_problem_file";
    case Errc::ambiguous_problem: return "ambiguous_problem";
    case Errc::unknown_object: return "unknown_object";
    case Errc::not_graspable: return "not_graspable";
    case Errc::already_attached: return "already_attached";
    case Errc::not_attached: return "not_attached";
    case Errc::no_gripper: return "no_gripper";
    case Errc::limits_violated: return "limits_violated";
    case Errc::in_collision: return "in_collision";
    case Errc::planner_not_set: return "planner_not_set";
    case Errc::query_not_set: return "query_not_set";
    case Errc::no_path: return "no_path";
    case Errc::unknown_session: return "unknown_session";
    case Errc::invalid_request: return "invalid_request";
    case Errc::transport: return "transport";
  }
  return "unknown";
}

}  // namespace lang2manip
