/*
 * Copyright 2026 The Prunex Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PRUNEX_RUNTIME_H_
#define PRUNEX_RUNTIME_H_

namespace prunex {

// Keeps large activation buffers on the heap instead of fresh mmap regions.
// Training allocates and frees same-sized tensors every step; without this,
// glibc returns them to the OS and every step pays the page faults again.
// No-op on other C libraries. Call once at program start.
void TuneAllocator();

}  // namespace prunex

#endif  // PRUNEX_RUNTIME_H_
