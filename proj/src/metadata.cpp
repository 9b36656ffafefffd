#include "unibci/metadata.hpp"

namespace unibci {

namespace {

void require(const std::string& v, const char* field) {
  if (v.empty())
    fail(ErrorKind::validation, std::string("metadata: field '") + field + "' is empty");
}

}  // namespace

std::string render_context(const MetadataRecord& m) {
  require(m.species, "species");
  require(m.dataset, "dataset");
  require(m.subject, "subject");
  require(m.region, "region");
  require(m.task, "task");
  require(m.session, "session");
  return "Invasive spike signals of " + m.species + " species (" + m.dataset + " " + m.subject +
         ") in the " + m.region + " brain region during the " + m.task + " task under session " +
         m.session + ".";
}

}  // namespace unibci
