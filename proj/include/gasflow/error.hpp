#pragma once

#include <stdexcept>
#include <string>

namespace gasflow {

/// Failure raised by any gasflow module. Carries the module name and the entity
/// (node id, edge id, cell index, ...) that caused it so diagnostics can point at
/// the offending input.
class Error : public std::runtime_error {
 public:
  enum class Kind { Input, Numerical };

  Error(Kind kind, std::string module, std::string entity, const std::string& message)
      : std::runtime_error(format(module, entity, message)),
        kind_(kind),
        module_(std::move(module)),
        entity_(std::move(entity)) {}

  Kind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }
  const std::string& entity() const noexcept { return entity_; }

 private:
  static std::string format(const std::string& module, const std::string& entity,
                            const std::string& message) {
    std::string out = "[" + module + "]";
    if (!entity.empty()) out += " " + entity + ":";
    return out + " " + message;
  }

  Kind kind_;
  std::string module_;
  std::string entity_;
};

inline Error input_error(std::string module, std::string entity, const std::string& message) {
  return Error(Error::Kind::Input, std::move(module), std::move(entity), message);
}

inline Error numerical_error(std::string module, std::string entity, const std::string& message) {
  return Error(Error::Kind::Numerical, std::move(module), std::move(entity), message);
}

}  // namespace gasflow
