/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace spardl {

/// Base class for every error thrown by this library.
class error : public std::runtime_error {
 public:
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid block partition request (B = 0 or B > N).
class partition_error : public error {
 public:
  using error::error;
};

/// merge_add called on blocks with different block ids.
class block_mismatch_error : public error {
 public:
  using error::error;
};

/// Two messages targeting the same worker within one round.
class schedule_violation_error : public error {
 public:
  using error::error;
};

/// A received bag contained a block the receiver no longer holds.
class theorem_violation_error : public error {
 public:
  using error::error;
};

/// Collective called on an empty or unsupported group.
class group_size_error : public error {
 public:
  using error::error;
};

/// Invalid cluster / run configuration; the message names the violated
/// invariant.
class config_error : public error {
 public:
  using error::error;
};

/// Residual store used out of phase (e.g. finalize called twice).
class state_error : public error {
 public:
  using error::error;
};

/// Workers disagree on the synchronized gradient.
class consistency_error : public error {
 public:
  using error::error;
};

}  // namespace spardl
