#pragma once

// Everything except the HTTP backend (http_backend.hpp) and the CLI.

#include <groundcrit/backends.hpp>
#include <groundcrit/detection.hpp>
#include <groundcrit/error.hpp>
#include <groundcrit/eval.hpp>
#include <groundcrit/fewshot.hpp>
#include <groundcrit/geometry.hpp>
#include <groundcrit/imaging.hpp>
#include <groundcrit/io.hpp>
#include <groundcrit/orchestrator.hpp>
#include <groundcrit/parsers.hpp>
#include <groundcrit/prompts.hpp>
#include <groundcrit/raster.hpp>
