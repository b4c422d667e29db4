#pragma once

#include <string>

#include "dct/serialization.hpp"

namespace dct::cli {

/// Graphviz rendering of a distilled tree. Every node shows its split
/// variable, estimate, standard error and row count; edges carry the split
/// value. Nodes significant at 95% get a thick border and an asterisk. Fill
/// runs linearly from red (lowest estimate in the tree) to green (highest).
std::string to_dot(const TreeDocument& doc);

}  // namespace dct::cli
