// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "dfpo/commands.hpp"

int main(int argc, char** argv)
{
    return dfpo::cli::run(argc, argv, std::cout, std::cerr);
}
