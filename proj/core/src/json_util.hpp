#pragma once

// Path-tracking accessors over nlohmann::json so schema errors name the field.

#include <array>
#include <string>

#include <nlohmann/json.hpp>

#include "ctsfm/errors.hpp"

namespace ctsfm::jsonutil {

class Field {
 public:
  Field(const nlohmann::json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const nlohmann::json& raw() const { return *j_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::kSchema, (path_.empty() ? std::string("<root>") : path_) + ": " + what);
  }

  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

  Field operator[](const std::string& key) const {
    const std::string sub = path_.empty() ? key : path_ + "." + key;
    if (!j_->is_object()) fail("expected an object");
    const auto it = j_->find(key);
    if (it == j_->end()) throw Error(Errc::kSchema, sub + ": missing required field");
    return Field(*it, sub);
  }

  Field operator[](std::size_t i) const {
    if (!j_->is_array()) fail("expected an array");
    if (i >= j_->size()) fail("index " + std::to_string(i) + " out of range");
    return Field((*j_)[i], path_ + "[" + std::to_string(i) + "]");
  }

  std::size_t size() const {
    if (!j_->is_array()) fail("expected an array");
    return j_->size();
  }

  void expect_array(std::size_t n) const {
    if (size() != n) fail("expected " + std::to_string(n) + " values");
  }

  double number() const {
    if (!j_->is_number()) fail("expected a number");
    return j_->get<double>();
  }

  int integer() const {
    if (!j_->is_number_integer()) fail("expected an integer");
    return j_->get<int>();
  }

  std::uint64_t unsigned_integer() const {
    if (!j_->is_number_unsigned() && !(j_->is_number_integer() && j_->get<std::int64_t>() >= 0)) {
      fail("expected a non-negative integer");
    }
    return j_->get<std::uint64_t>();
  }

  bool boolean() const {
    if (!j_->is_boolean()) fail("expected true or false");
    return j_->get<bool>();
  }

  std::string string() const {
    if (!j_->is_string()) fail("expected a string");
    return j_->get<std::string>();
  }

  std::vector<double> numbers(std::size_t n) const {
    expect_array(n);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = (*this)[i].number();
    return out;
  }

 private:
  const nlohmann::json* j_;
  std::string path_;
};

inline void check_version(const Field& top, int expected) {
  const int v = top["format_version"].integer();
  if (v != expected) {
    top["format_version"].fail("unsupported version " + std::to_string(v) + " (expected " +
                               std::to_string(expected) + ")");
  }
}

}  // namespace ctsfm::jsonutil
