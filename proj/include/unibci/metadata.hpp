#pragma once

#include <string>

#include "unibci/common.hpp"

namespace unibci {

// Session-level recording context. Every field participates in the rendered
// context sentence, so none may be empty.
struct MetadataRecord {
  std::string species;
  std::string dataset;
  std::string subject;
  std::string region;
  std::string task;
  std::string session;

  bool operator==(const MetadataRecord&) const = default;
};

// Renders the fixed context sentence fed to the text encoder.
std::string render_context(const MetadataRecord& m);

}  // namespace unibci
