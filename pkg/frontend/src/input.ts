// Keyboard steering for the simulated pedestrian.
//
// Arrow up/down set walking speed (1.2 m/s / stop), arrow left/right turn
// at 90 deg/s while held, and W holds the binding wave. Steer commands go
// out at 10 Hz while inputs are active; the on-screen compass republishes
// the steered agent's heading from world snapshots at 5 Hz, standing in
// for the phone compass.

export const WALK_SPEED_MPS = 1.2;
export const TURN_RATE_DPS = 90;

export interface SteerState {
  walking: boolean;
  turn: -1 | 0 | 1;
  waving: boolean;
}

export class KeyboardSteering {
  state: SteerState = { walking: false, turn: 0, waving: false };
  private sendSteer: (payload: Record<string, unknown>) => void;
  private sendWave: (waving: boolean) => void;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    sendSteer: (payload: Record<string, unknown>) => void,
    sendWave: (waving: boolean) => void,
  ) {
    this.sendSteer = sendSteer;
    this.sendWave = sendWave;
  }

  attach(target: { addEventListener: Window["addEventListener"] }) {
    target.addEventListener("keydown", (ev) => this.onKey(ev as KeyboardEvent, true));
    target.addEventListener("keyup", (ev) => this.onKey(ev as KeyboardEvent, false));
    this.timer = setInterval(() => this.pump(), 100);
  }

  detach() {
    if (this.timer) clearInterval(this.timer);
  }

  onKey(ev: KeyboardEvent, down: boolean) {
    let handled = true;
    switch (ev.key) {
      case "ArrowUp":
        if (down) this.state.walking = true;
        break;
      case "ArrowDown":
        if (down) this.state.walking = false;
        break;
      case "ArrowLeft":
        this.state.turn = down ? -1 : this.state.turn === -1 ? 0 : this.state.turn;
        break;
      case "ArrowRight":
        this.state.turn = down ? 1 : this.state.turn === 1 ? 0 : this.state.turn;
        break;
      case "w":
      case "W":
        if (this.state.waving !== down) {
          this.state.waving = down;
          this.sendWave(down);
          this.sendSteer({ waving: down });
        }
        break;
      default:
        handled = false;
    }
    if (handled && down) ev.preventDefault();
  }

  pump() {
    this.sendSteer({
      speed_mps: this.state.walking ? WALK_SPEED_MPS : 0,
      turn_dps: this.state.turn * TURN_RATE_DPS,
    });
  }
}
