#pragma once

#include <cstdio>
#include <fstream>
#include <string>

#include "spinorsurf/errors.hpp"

namespace spinorsurf {

/// Writes through a temporary sibling and renames it into place, so readers
/// never observe a partial file.
template <class Writer>
void write_atomic(const std::string& path, Writer&& write) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot open '" + tmp + "' for writing");
    write(out);
    if (!out) throw Error("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error("cannot move '" + tmp + "' to '" + path + "'");
}

}  // namespace spinorsurf
