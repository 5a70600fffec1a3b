#pragma once

namespace mage {

/// Selects between the serial reference loop and the OpenMP kernel.
/// Both paths produce identical results; the serial one is kept for tests.
enum class Execution { serial, parallel };

int max_threads();
void set_threads(int n);

} // namespace mage
