#include <iostream>

#include "mcens/cli.hpp"

int main(int argc, char** argv)
{
  return mcens::run_cli(argc, argv, std::cout, std::cerr);
}
