// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "vbpc/cli.hpp"

int main(int argc, char** argv) { return vbpc::cli::run(argc, argv); }
