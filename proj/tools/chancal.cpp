#include <iostream>

#include "chancal/commands.hpp"

int main(int argc, char** argv)
{
    return chancal::run_cli(argc, argv, std::cout, std::cerr);
}
