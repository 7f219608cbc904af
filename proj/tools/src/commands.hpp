#pragma once

namespace CLI {
class App;
}

namespace dfetrack::cli {

// Registers convert, ingest, train, match, track, calibrate, synth and
// report on `app`. Handlers throw dfetrack::Error subclasses on failure.
void add_commands(CLI::App& app);

}  // namespace dfetrack::cli
